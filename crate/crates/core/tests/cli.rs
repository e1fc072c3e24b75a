use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use hamlens::cli::config::{self, ExperimentKind, IssueKind};
use hamlens::cli::output::Status;
use hamlens::cli::{run, validate, RunOptions};

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn scenarios() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn opts(dir: &Path, overrides: &[&str]) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        overrides: overrides.iter().map(|s| s.to_string()).collect(),
        ..Default::default()
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hamlens"))
}

#[test]
fn every_scenario_is_byte_deterministic_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let files = scenarios();
    let kinds: std::collections::BTreeSet<_> = files
        .iter()
        .map(|f| config::load(&fs::read_to_string(f).unwrap(), &[]).unwrap().experiment.as_str())
        .collect();
    assert_eq!(kinds.len(), ExperimentKind::ALL.len(), "one scenario per experiment at least");
    for f in files {
        let stem = f.file_stem().unwrap().to_string_lossy().into_owned();
        let (a, b) = (tmp.path().join(format!("{stem}_a")), tmp.path().join(format!("{stem}_b")));
        let sa = run(&f, &opts(&a, &[]));
        let sb = run(&f, &RunOptions { threads: Some(2), ..opts(&b, &[]) });
        assert_eq!(sa.status, Status::Pass, "{stem}: {:?} {:?}", sa.error, sa.checks);
        assert_eq!(sb.status, Status::Pass);
        let (fa, fb) = (read_all(&a), read_all(&b));
        assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>(), "{stem}");
        for (name, bytes) in &fa {
            assert!(bytes == &fb[name], "{stem}/{name} differs between runs");
        }
        assert!(fa.contains_key("summary.json"));
    }
}

#[test]
fn diameter_ray_has_length_two() {
    let tmp = tempfile::tempdir().unwrap();
    let s = run(&scenario_dir().join("euclid_disk.toml"), &opts(tmp.path(), &[]));
    assert_eq!(s.exit_code(), 0);
    let text = fs::read_to_string(tmp.path().join("scatter.csv")).unwrap();
    assert!(text.starts_with("# seed=1 scenario=euclid_disk schema_version=1\n"));
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let cols: Vec<&str> = header.iter().collect();
    assert_eq!(
        cols,
        [
            "entry_chart",
            "entry_u1",
            "entry_xi_prime1",
            "exit_chart",
            "exit_u1",
            "exit_xi_prime1",
            "ell",
            "energy",
            "flag_transversal"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 9);
    let mid = &rows[4];
    assert_eq!(mid[2].parse::<f64>().unwrap(), 0.0);
    assert!((mid[6].parse::<f64>().unwrap() - 2.0).abs() < 1e-10);
    assert_eq!(&mid[8], "1");
}

#[test]
fn minkowski_table_stays_on_the_light_cone() {
    let tmp = tempfile::tempdir().unwrap();
    let s = run(&scenario_dir().join("minkowski_slab.toml"), &opts(tmp.path(), &[]));
    assert_eq!(s.exit_code(), 0);
    let level = s.checks.iter().find(|c| c.name == "energy_defect").unwrap();
    assert!(level.value <= 1e-10 && level.threshold == 1e-10);
}

#[test]
fn kappa_pair_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", scenario_dir().join("kappa_pair.toml").to_str().unwrap(), "--out-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "pass");
    let sym = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "symplectic").unwrap();
    assert!(sym["value"].as_f64().unwrap() <= 1e-6);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("kappa_report.json")).unwrap()).unwrap();
    for rec in report.as_array().unwrap() {
        for key in ["symplectic", "hamiltonian_pullback", "conjugation", "boundary"] {
            assert!(rec[key].is_number(), "{key}");
        }
    }
}

/// Small versions of each scenario so that the exit-code runs stay cheap.
fn shrink(stem: &str) -> Vec<&'static str> {
    match stem {
        "lens_traveltime" => vec!["params.boundary_pairs=2"],
        "lens_flow" => vec!["params.random_points=2"],
        "kappa_pair" => vec!["params.rays=1"],
        "randers_disk" | "zero_energy_mu" | "xray_gauge" | "lightray_minkowski" => vec!["params.rays=2"],
        _ => vec![],
    }
}

#[test]
fn threshold_failures_exit_two_for_every_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    for f in scenarios() {
        let stem = f.file_stem().unwrap().to_string_lossy().into_owned();
        let base = shrink(&stem);
        let first = run(&f, &opts(&tmp.path().join(&stem), &base));
        assert_eq!(first.exit_code(), 0, "{stem}: {:?}", first.error);
        let c = first
            .checks
            .iter()
            .find(|c| c.value > 0.0)
            .unwrap_or_else(|| panic!("{stem}: no nonzero check"));
        let ov = format!("tolerances.{}={:e}", c.name, c.value / 10.0);
        let mut args = vec![
            "run".to_string(),
            f.to_string_lossy().into_owned(),
            "--out-dir".into(),
            tmp.path().join(format!("{stem}_fail")).to_string_lossy().into_owned(),
            "--override".into(),
            ov,
        ];
        for b in &base {
            args.extend(["--override".to_string(), b.to_string()]);
        }
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{stem}");
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(tmp.path().join(format!("{stem}_fail/summary.json"))).unwrap()).unwrap();
        assert_eq!(v["status"], "fail");
    }
}

#[test]
fn hard_errors_exit_one_for_every_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    for f in scenarios() {
        let stem = f.file_stem().unwrap().to_string_lossy().into_owned();
        let mut ov = shrink(&stem);
        ov.push("integrator.max_time=1e-3");
        let s = run(&f, &opts(&tmp.path().join(&stem), &ov));
        assert_eq!(s.exit_code(), 1, "{stem}: {:?}", s.status);
        assert!(s.error.is_some());
        assert!(tmp.path().join(&stem).join("summary.json").exists(), "{stem}");
    }
}

#[test]
fn config_errors_exit_one_and_still_write_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "schema_version = 1\nname = \"bad\"\nexperiment = \"flow\"\n[model]\ndim = 2\n").unwrap();
    let out_dir = tmp.path().join("out");
    let out = bin().args(["run", bad.to_str().unwrap(), "--out-dir"]).arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "error");
    assert!(v["error"].as_str().unwrap().contains("model.kind"));
}

#[test]
fn seed_flag_is_recorded_and_changes_random_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let f = scenario_dir().join("lens_flow.toml");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&f, &opts(&a, &[]));
    run(&f, &RunOptions { seed: Some(99), ..opts(&b, &[]) });
    let ta = fs::read_to_string(a.join("traj_005.csv")).unwrap();
    let tb = fs::read_to_string(b.join("traj_005.csv")).unwrap();
    assert!(ta.starts_with("# seed=3 "));
    assert!(tb.starts_with("# seed=99 "));
    assert_ne!(ta.lines().nth(2), tb.lines().nth(2));
    // the listed points do not depend on the seed
    let (pa, pb) = (fs::read_to_string(a.join("traj_000.csv")).unwrap(), fs::read_to_string(b.join("traj_000.csv")).unwrap());
    assert_eq!(pa.lines().skip(1).collect::<Vec<_>>(), pb.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn threads_env_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .env("HAMLENS_THREADS", "2")
        .args(["run", scenario_dir().join("euclid_disk.toml").to_str().unwrap(), "--out-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin()
        .env("HAMLENS_THREADS", "many")
        .args(["run", scenario_dir().join("euclid_disk.toml").to_str().unwrap(), "--out-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "usage errors are hard errors");
}

#[test]
fn validate_reports() {
    for f in scenarios() {
        let r = validate(&f, &[]);
        assert!(r.valid && r.issues.is_empty(), "{}: {:?}", f.display(), r.issues);
    }
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("s.toml");
    fs::write(
        &p,
        "schema_version = 1\nname = \"s\"\nexperiment = \"scatter_fan\"\n[model]\ndim = 2\nname = \"euclidean\"\n[domain]\nshape = \"disk\"\n",
    )
    .unwrap();
    let r = validate(&p, &[]);
    assert_eq!(r.issues.len(), 1);
    assert_eq!(r.issues[0].path, "model.kind");
    assert_eq!(r.issues[0].kind, IssueKind::Missing);

    let good = scenario_dir().join("euclid_disk.toml");
    let r = validate(&good, &["tolerances.inverse=-1e-6".into()]);
    assert_eq!(r.issues.len(), 1);
    assert_eq!(r.issues[0].path, "tolerances.inverse");
    assert_eq!(r.issues[0].kind, IssueKind::Range);

    let r = validate(&good, &["model.name=\"nope\"".into()]);
    assert_eq!(r.issues[0].kind, IssueKind::Unknown);
    let r = validate(&good, &["model.kind=\"conformal\"".into(), "model.speed=\"1 + y\"".into()]);
    assert_eq!(r.issues[0].path, "model.speed");
    assert_eq!(r.issues[0].kind, IssueKind::Expression);
    let r = validate(&good, &["integrator.rel_tol=0".into()]);
    assert_eq!(r.issues[0].path, "integrator.rel_tol");
    let r = validate(&good, &["params.rays=0".into()]);
    assert_eq!(r.issues[0].path, "params.rays");
    assert_eq!(r.issues[0].kind, IssueKind::Range);

    let out = bin().args(["validate", p.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["issues"][0]["path"], "model.kind");
    let out = bin().args(["validate", good.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn list_builtins() {
    let out = bin().arg("list-builtins").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["models"].as_array().unwrap().iter().any(|m| m == "lens"));
    assert_eq!(v["experiments"].as_array().unwrap().len(), 8);
}

#[test]
fn expression_models_and_domains_run() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("expr.toml");
    fs::write(
        &p,
        r#"schema_version = 1
name = "expr"
experiment = "scatter_fan"

[model]
kind = "expression"
dim = 2
value = "0.5 * (xi1^2 + xi2^2)"

[domain]
shape = "expression"
dim = 2
rho = "1 - x1^2 - x2^2"

[[domain.charts]]
param = ["cos(u1)", "sin(u1)"]
u0 = [0.0]

[[domain.charts]]
param = ["-cos(u1)", "-sin(u1)"]
u0 = [0.0]

[params]
chart = 1
rays = 3
xi_prime_range = [-0.6, 0.6]
"#,
    )
    .unwrap();
    let s = run(&p, &opts(&tmp.path().join("out"), &[]));
    assert_eq!(s.exit_code(), 0, "{:?}", s.error);
    let text = fs::read_to_string(tmp.path().join("out/scatter.csv")).unwrap();
    let mid = text.lines().nth(3).unwrap();
    let ell: f64 = mid.split(',').nth(6).unwrap().parse().unwrap();
    assert!((ell - 2.0).abs() < 1e-9);
}
