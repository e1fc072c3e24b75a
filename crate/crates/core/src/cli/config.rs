//! Scenario files: schema, validation and construction of the objects they
//! describe.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boundary::shapes;
use crate::boundary::{Chart, ClosureChart, Domain};
use crate::canonical::gauges::{bump_generating, bump_lift, Bump};
use crate::canonical::{CanonicalMap, Transported};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarKind, Vars};
use crate::finsler::{self, Finsler, Randers, Riemannian};
use crate::flow::IntegratorConfig;
use crate::hamiltonians::{builtin, Conformal, Custom, Model, Scaled};
use crate::linalg::{Matrix, Vector};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Flow,
    ScatterFan,
    TraveltimeTable,
    XraySinogram,
    Lightray,
    KappaValidate,
    FinslerSuite,
    ZeroEnergySuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Flow,
        ExperimentKind::ScatterFan,
        ExperimentKind::TraveltimeTable,
        ExperimentKind::XraySinogram,
        ExperimentKind::Lightray,
        ExperimentKind::KappaValidate,
        ExperimentKind::FinslerSuite,
        ExperimentKind::ZeroEnergySuite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Flow => "flow",
            ExperimentKind::ScatterFan => "scatter_fan",
            ExperimentKind::TraveltimeTable => "traveltime_table",
            ExperimentKind::XraySinogram => "xray_sinogram",
            ExperimentKind::Lightray => "lightray",
            ExperimentKind::KappaValidate => "kappa_validate",
            ExperimentKind::FinslerSuite => "finsler_suite",
            ExperimentKind::ZeroEnergySuite => "zero_energy_suite",
        }
    }

    fn needs_model(self) -> bool {
        self != ExperimentKind::FinslerSuite
    }

    fn needs_domain(self) -> bool {
        self != ExperimentKind::Flow && self != ExperimentKind::TraveltimeTable
    }
}

/// A complete scenario file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub model_tilde: Option<ModelSpec>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub finsler: Option<FinslerSpec>,
    #[serde(default)]
    pub gauge: Option<GaugeSpec>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub params: Params,
    /// Threshold overrides keyed by check name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `builtin`, `conformal`, `metric`, `expression` or `scaled`.
    pub kind: String,
    pub dim: usize,
    #[serde(default)]
    pub name: Option<String>,
    /// Parameter of parametrized builtins (`lens`, `constant_speed`, `skew_polynomial`).
    #[serde(default)]
    pub param: Option<f64>,
    /// Wave speed `c(x)` for `conformal`.
    #[serde(default)]
    pub speed: Option<String>,
    /// Cometric entries in `x` for `metric`.
    #[serde(default)]
    pub cometric: Option<Vec<Vec<String>>>,
    /// `H(x, ξ)` for `expression`.
    #[serde(default)]
    pub value: Option<String>,
    /// `μ(x, ξ)` for `scaled`.
    #[serde(default)]
    pub factor: Option<String>,
    #[serde(default)]
    pub base: Option<Box<ModelSpec>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// `half_space`, `disk`, `ball`, `slab` or `expression`.
    pub shape: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub axis: Option<usize>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    /// Defining function `ρ(x)` for `expression`.
    #[serde(default)]
    pub rho: Option<String>,
    #[serde(default)]
    pub charts: Vec<ChartSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    /// Components of `x(u)`.
    pub param: Vec<String>,
    pub u0: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinslerSpec {
    /// `builtin`, `riemannian` or `randers`.
    pub kind: String,
    pub dim: usize,
    #[serde(default)]
    pub name: Option<String>,
    /// Metric `g(x)` (riemannian) or `a(x)` (randers) entries.
    #[serde(default)]
    pub metric: Option<Vec<Vec<String>>>,
    /// Drift one-form `b(x)` (randers).
    #[serde(default)]
    pub drift: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    /// `bump_lift` or `bump_generating`.
    pub kind: String,
    pub center: Vec<f64>,
    pub radius: f64,
    pub eps: f64,
    #[serde(default)]
    pub direction: Vec<f64>,
}

/// Experiment parameters; each experiment reads the subset it needs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub points: Vec<Vec<f64>>,
    pub random_points: usize,
    pub t_end: f64,
    pub samples: usize,
    pub jacobian: bool,
    pub chart: usize,
    pub entry_u: Vec<Vec<f64>>,
    pub rays: usize,
    pub energy: f64,
    pub xi_prime: Vec<Vec<f64>>,
    pub xi_prime_range: Option<[f64; 2]>,
    pub lambdas: Vec<f64>,
    pub pairs: Vec<Vec<f64>>,
    pub boundary_pairs: usize,
    pub integrand: Option<String>,
    pub gauge_potential: Option<String>,
    pub s_grid: Vec<f64>,
    pub mu_expected: Option<String>,
    pub angle_max: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            points: Vec::new(),
            random_points: 0,
            t_end: 1.0,
            samples: 11,
            jacobian: true,
            chart: 0,
            entry_u: Vec::new(),
            rays: 9,
            energy: 0.5,
            xi_prime: Vec::new(),
            xi_prime_range: None,
            lambdas: Vec::new(),
            pairs: Vec::new(),
            boundary_pairs: 0,
            integrand: None,
            gauge_potential: None,
            s_grid: vec![0.1, 0.25],
            mu_expected: None,
            angle_max: 1.2,
        }
    }
}

/// One schema problem, located by a dotted path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub path: String,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Syntax,
    Missing,
    Type,
    Range,
    Unknown,
    Expression,
}

fn issue(path: &str, kind: IssueKind, message: impl Into<String>) -> Issue {
    Issue {
        path: path.to_string(),
        kind,
        message: message.into(),
    }
}

/// Parse TOML text and apply `key.path=value` overrides.
pub fn parse_document(text: &str, overrides: &[String]) -> std::result::Result<toml::Table, Vec<Issue>> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| vec![issue("", IssueKind::Syntax, e.message().to_string())])?;
    for ov in overrides {
        let Some((key, raw)) = ov.split_once('=') else {
            return Err(vec![issue(ov, IssueKind::Syntax, "override must be key=value")]);
        };
        let value = parse_override_value(raw.trim());
        set_path(&mut doc, key.trim(), value).map_err(|m| vec![issue(key.trim(), IssueKind::Type, m)])?;
    }
    Ok(doc)
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> std::result::Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("'{p}' is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

const REQUIRED: &[(&str, &[&str])] = &[
    ("", &["schema_version", "name", "experiment"]),
    ("model", &["kind", "dim"]),
    ("model_tilde", &["kind", "dim"]),
    ("domain", &["shape"]),
    ("finsler", &["kind", "dim"]),
    ("gauge", &["kind", "center", "radius", "eps"]),
];

fn structural(doc: &toml::Table) -> Vec<Issue> {
    let mut out = Vec::new();
    for (section, keys) in REQUIRED {
        let table = if section.is_empty() {
            Some(doc)
        } else {
            match doc.get(*section) {
                None => None,
                Some(toml::Value::Table(t)) => Some(t),
                Some(_) => {
                    out.push(issue(section, IssueKind::Type, "expected a table"));
                    None
                }
            }
        };
        if let Some(t) = table {
            for k in *keys {
                if !t.contains_key(*k) {
                    let path = if section.is_empty() {
                        k.to_string()
                    } else {
                        format!("{section}.{k}")
                    };
                    out.push(issue(&path, IssueKind::Missing, "required key is missing"));
                }
            }
        }
    }
    out
}

fn check_expr(path: &str, src: &str, allowed: &[VarKind], n: usize, out: &mut Vec<Issue>) {
    match Expr::parse(src).and_then(|e| e.check_vars(allowed, n)) {
        Ok(()) => {}
        Err(e) => out.push(issue(path, IssueKind::Expression, e.to_string())),
    }
}

fn check_model(path: &str, m: &ModelSpec, out: &mut Vec<Issue>) {
    let n = m.dim;
    if n < 2 {
        out.push(issue(&format!("{path}.dim"), IssueKind::Range, format!("dimension must be at least 2, got {n}")));
        return;
    }
    match m.kind.as_str() {
        "builtin" => match &m.name {
            None => out.push(issue(&format!("{path}.name"), IssueKind::Missing, "builtin models need a name")),
            Some(name) if !builtin::NAMES.contains(&name.as_str()) => out.push(issue(
                &format!("{path}.name"),
                IssueKind::Unknown,
                format!("unknown builtin '{name}'; known: {}", builtin::NAMES.join(", ")),
            )),
            _ => {}
        },
        "conformal" => match &m.speed {
            None => out.push(issue(&format!("{path}.speed"), IssueKind::Missing, "conformal models need a speed")),
            Some(s) => check_expr(&format!("{path}.speed"), s, &[VarKind::X], n, out),
        },
        "metric" => match &m.cometric {
            None => out.push(issue(&format!("{path}.cometric"), IssueKind::Missing, "metric models need a cometric")),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    out.push(issue(&format!("{path}.cometric"), IssueKind::Type, format!("expected a {n}x{n} matrix")));
                }
                for (i, r) in rows.iter().enumerate() {
                    for (j, s) in r.iter().enumerate() {
                        check_expr(&format!("{path}.cometric[{i}][{j}]"), s, &[VarKind::X], n, out);
                    }
                }
            }
        },
        "expression" => match &m.value {
            None => out.push(issue(&format!("{path}.value"), IssueKind::Missing, "expression models need a value")),
            Some(s) => check_expr(&format!("{path}.value"), s, &[VarKind::X, VarKind::Xi], n, out),
        },
        "scaled" => {
            match &m.factor {
                None => out.push(issue(&format!("{path}.factor"), IssueKind::Missing, "scaled models need a factor")),
                Some(s) => check_expr(&format!("{path}.factor"), s, &[VarKind::X, VarKind::Xi], n, out),
            }
            match &m.base {
                None => out.push(issue(&format!("{path}.base"), IssueKind::Missing, "scaled models need a base")),
                Some(b) => {
                    if b.dim != n {
                        out.push(issue(&format!("{path}.base.dim"), IssueKind::Range, "base dimension differs"));
                    }
                    check_model(&format!("{path}.base"), b, out);
                }
            }
        }
        other => out.push(issue(
            &format!("{path}.kind"),
            IssueKind::Unknown,
            format!("unknown model kind '{other}'; known: builtin, conformal, metric, expression, scaled"),
        )),
    }
}

fn check_positive(path: &str, v: Option<f64>, out: &mut Vec<Issue>) {
    if let Some(v) = v {
        if !(v > 0.0) {
            out.push(issue(path, IssueKind::Range, format!("must be positive, got {v}")));
        }
    }
}

fn check_domain(d: &DomainSpec, n: Option<usize>, out: &mut Vec<Issue>) {
    let dim = d.dim.or(n);
    match d.shape.as_str() {
        "disk" => {
            check_positive("domain.radius", d.radius, out);
            if n.is_some_and(|n| n != 2) {
                out.push(issue("domain.shape", IssueKind::Range, "disk domains are two-dimensional"));
            }
        }
        "ball" => check_positive("domain.radius", d.radius, out),
        "half_space" => {}
        "slab" => {
            let (lo, hi) = (d.lo.unwrap_or(0.0), d.hi.unwrap_or(1.0));
            if !(hi > lo) {
                out.push(issue("domain.hi", IssueKind::Range, "slab needs hi > lo"));
            }
            if let (Some(a), Some(n)) = (d.axis, dim) {
                if a >= n {
                    out.push(issue("domain.axis", IssueKind::Range, format!("axis {a} out of range")));
                }
            }
        }
        "expression" => {
            let n = dim.unwrap_or(2);
            match &d.rho {
                None => out.push(issue("domain.rho", IssueKind::Missing, "expression domains need rho")),
                Some(s) => check_expr("domain.rho", s, &[VarKind::X], n, out),
            }
            if d.charts.is_empty() {
                out.push(issue("domain.charts", IssueKind::Missing, "expression domains need charts"));
            }
            for (k, c) in d.charts.iter().enumerate() {
                if c.param.len() != n || c.u0.len() + 1 != n {
                    out.push(issue(&format!("domain.charts[{k}]"), IssueKind::Type, "chart sizes do not match the dimension"));
                }
                for (i, s) in c.param.iter().enumerate() {
                    check_expr(&format!("domain.charts[{k}].param[{i}]"), s, &[VarKind::U], n - 1, out);
                }
            }
        }
        other => out.push(issue(
            "domain.shape",
            IssueKind::Unknown,
            format!("unknown shape '{other}'; known: half_space, disk, ball, slab, expression"),
        )),
    }
}

fn check_finsler(f: &FinslerSpec, out: &mut Vec<Issue>) {
    let n = f.dim;
    match f.kind.as_str() {
        "builtin" => match &f.name {
            Some(name) if finsler::builtin::NAMES.contains(&name.as_str()) => {}
            _ => out.push(issue(
                "finsler.name",
                IssueKind::Unknown,
                format!("known: {}", finsler::builtin::NAMES.join(", ")),
            )),
        },
        "riemannian" | "randers" => {
            if let Some(rows) = &f.metric {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    out.push(issue("finsler.metric", IssueKind::Type, format!("expected a {n}x{n} matrix")));
                }
                for (i, r) in rows.iter().enumerate() {
                    for (j, s) in r.iter().enumerate() {
                        check_expr(&format!("finsler.metric[{i}][{j}]"), s, &[VarKind::X], n, out);
                    }
                }
            } else if f.kind == "riemannian" {
                out.push(issue("finsler.metric", IssueKind::Missing, "riemannian structures need a metric"));
            }
            if f.kind == "randers" {
                match &f.drift {
                    None => out.push(issue("finsler.drift", IssueKind::Missing, "randers structures need a drift")),
                    Some(d) => {
                        if d.len() != n {
                            out.push(issue("finsler.drift", IssueKind::Type, format!("expected {n} components")));
                        }
                        for (i, s) in d.iter().enumerate() {
                            check_expr(&format!("finsler.drift[{i}]"), s, &[VarKind::X], n, out);
                        }
                    }
                }
            }
        }
        other => out.push(issue(
            "finsler.kind",
            IssueKind::Unknown,
            format!("unknown finsler kind '{other}'; known: builtin, riemannian, randers"),
        )),
    }
}

fn semantic(sc: &Scenario) -> Vec<Issue> {
    let mut out = Vec::new();
    if sc.schema_version != SCHEMA_VERSION {
        out.push(issue(
            "schema_version",
            IssueKind::Range,
            format!("unsupported schema version {} (expected {SCHEMA_VERSION})", sc.schema_version),
        ));
    }
    let exp = sc.experiment;
    if exp.needs_model() && sc.model.is_none() {
        out.push(issue("model", IssueKind::Missing, format!("{} needs a model", exp.as_str())));
    }
    if exp == ExperimentKind::FinslerSuite && sc.finsler.is_none() {
        out.push(issue("finsler", IssueKind::Missing, "finsler_suite needs a finsler section"));
    }
    if exp.needs_domain() && sc.domain.is_none() {
        out.push(issue("domain", IssueKind::Missing, format!("{} needs a domain", exp.as_str())));
    }
    if exp == ExperimentKind::KappaValidate && sc.gauge.is_none() && sc.model_tilde.is_none() {
        out.push(issue("gauge", IssueKind::Missing, "kappa_validate needs a gauge or model_tilde"));
    }
    if exp == ExperimentKind::ZeroEnergySuite && sc.gauge.is_none() && sc.model_tilde.is_none() {
        out.push(issue("model_tilde", IssueKind::Missing, "zero_energy_suite needs model_tilde or a gauge"));
    }
    let n = sc.model.as_ref().map(|m| m.dim).or(sc.finsler.as_ref().map(|f| f.dim));
    if let Some(m) = &sc.model {
        check_model("model", m, &mut out);
    }
    if let Some(m) = &sc.model_tilde {
        check_model("model_tilde", m, &mut out);
        if Some(m.dim) != n {
            out.push(issue("model_tilde.dim", IssueKind::Range, "dimension differs from model"));
        }
    }
    if let Some(d) = &sc.domain {
        check_domain(d, n, &mut out);
    }
    if let Some(f) = &sc.finsler {
        check_finsler(f, &mut out);
    }
    if let Some(g) = &sc.gauge {
        if g.kind != "bump_lift" && g.kind != "bump_generating" {
            out.push(issue("gauge.kind", IssueKind::Unknown, "known: bump_lift, bump_generating"));
        }
        check_positive("gauge.radius", Some(g.radius), &mut out);
        if Some(g.center.len()) != n {
            out.push(issue("gauge.center", IssueKind::Type, "center dimension differs from the model"));
        }
        if g.kind == "bump_lift" && Some(g.direction.len()) != n {
            out.push(issue("gauge.direction", IssueKind::Type, "bump_lift needs a direction of the model dimension"));
        }
    }
    for (k, v) in &sc.tolerances {
        check_positive(&format!("tolerances.{k}"), Some(*v), &mut out);
    }
    let ic = &sc.integrator;
    check_positive("integrator.rel_tol", Some(ic.rel_tol), &mut out);
    check_positive("integrator.abs_tol", Some(ic.abs_tol), &mut out);
    check_positive("integrator.max_step", Some(ic.max_step), &mut out);
    check_positive("integrator.max_time", Some(ic.max_time), &mut out);
    let p = &sc.params;
    if p.energy < 0.0 {
        out.push(issue("params.energy", IssueKind::Range, "energy must be non-negative"));
    }
    if p.energy == 0.0 && p.xi_prime.is_empty() && p.xi_prime_range.is_none() && matches!(exp, ExperimentKind::ScatterFan | ExperimentKind::Lightray) {
        out.push(issue("params.xi_prime_range", IssueKind::Missing, "zero-energy fans need an explicit xi_prime range"));
    }
    if matches!(exp, ExperimentKind::ZeroEnergySuite) && p.xi_prime.is_empty() && p.xi_prime_range.is_none() {
        out.push(issue("params.xi_prime_range", IssueKind::Missing, "zero-energy fans need an explicit xi_prime range"));
    }
    let fans = [
        ExperimentKind::ScatterFan,
        ExperimentKind::XraySinogram,
        ExperimentKind::Lightray,
        ExperimentKind::KappaValidate,
        ExperimentKind::FinslerSuite,
        ExperimentKind::ZeroEnergySuite,
    ];
    if fans.contains(&exp) && p.rays == 0 && p.xi_prime.is_empty() {
        out.push(issue("params.rays", IssueKind::Range, "need at least one ray"));
    }
    if exp == ExperimentKind::Flow {
        check_positive("params.t_end", Some(p.t_end), &mut out);
        if p.samples < 2 {
            out.push(issue("params.samples", IssueKind::Range, "need at least two samples"));
        }
    }
    if !(p.angle_max > 0.0 && p.angle_max < std::f64::consts::FRAC_PI_2) {
        out.push(issue("params.angle_max", IssueKind::Range, "must lie in (0, π/2)"));
    }
    for (i, s) in p.s_grid.iter().enumerate() {
        check_positive(&format!("params.s_grid[{i}]"), Some(*s), &mut out);
    }
    for (i, l) in p.lambdas.iter().enumerate() {
        check_positive(&format!("params.lambdas[{i}]"), Some(*l), &mut out);
    }
    let exprs = [
        ("params.integrand", &p.integrand),
        ("params.gauge_potential", &p.gauge_potential),
        ("params.mu_expected", &p.mu_expected),
    ];
    for (path, e) in exprs {
        if let Some(s) = e {
            check_expr(path, s, &[VarKind::X, VarKind::Xi], n.unwrap_or(2), &mut out);
        }
    }
    if let Some(n) = n {
        for (i, pt) in p.points.iter().enumerate() {
            if pt.len() != 2 * n {
                out.push(issue(&format!("params.points[{i}]"), IssueKind::Type, format!("expected {} numbers", 2 * n)));
            }
        }
        for (i, pt) in p.pairs.iter().enumerate() {
            if pt.len() != 2 * n {
                out.push(issue(&format!("params.pairs[{i}]"), IssueKind::Type, format!("expected {} numbers", 2 * n)));
            }
        }
    }
    out
}

/// Parse, check and type a scenario. All problems are collected.
pub fn load(text: &str, overrides: &[String]) -> std::result::Result<Scenario, Vec<Issue>> {
    let doc = parse_document(text, overrides)?;
    let issues = structural(&doc);
    if !issues.is_empty() {
        return Err(issues);
    }
    let sc: Scenario = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| vec![issue("", IssueKind::Type, e.message().to_string())])?;
    let issues = semantic(&sc);
    if issues.is_empty() {
        Ok(sc)
    } else {
        Err(issues)
    }
}

fn scalar_x(src: &str) -> Result<Arc<dyn Fn(&Vector) -> f64 + Send + Sync>> {
    let e = Expr::parse(src)?;
    Ok(Arc::new(move |x: &Vector| {
        e.eval(&Vars {
            x: x.as_slice(),
            ..Default::default()
        })
    }))
}

pub fn phase_scalar(src: &str) -> Result<Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>> {
    let e = Expr::parse(src)?;
    Ok(Arc::new(move |x: &Vector, xi: &Vector| {
        e.eval(&Vars {
            x: x.as_slice(),
            xi: xi.as_slice(),
            ..Default::default()
        })
    }))
}

fn matrix_x(rows: &[Vec<String>]) -> Result<Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>> {
    let n = rows.len();
    let es = rows
        .iter()
        .flatten()
        .map(|s| Expr::parse(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Arc::new(move |x: &Vector| {
        let vars = Vars {
            x: x.as_slice(),
            ..Default::default()
        };
        Matrix::from_row_iterator(n, n, es.iter().map(|e| e.eval(&vars)))
    }))
}

pub fn build_model(m: &ModelSpec) -> Result<Model> {
    let n = m.dim;
    let missing = |k: &str| Error::ConfigParse(format!("model.{k} is missing"));
    Ok(match m.kind.as_str() {
        "builtin" => {
            let name = m.name.as_deref().ok_or_else(|| missing("name"))?;
            match (name, m.param) {
                ("lens", Some(a)) => Arc::new(builtin::lens(n, a)),
                ("constant_speed", Some(c)) => Arc::new(builtin::constant_speed(n, c)),
                ("skew_polynomial", Some(e)) => Arc::new(builtin::skew_polynomial(n, e)),
                _ => builtin::by_name(name, n).ok_or_else(|| Error::ConfigParse(format!("unknown builtin '{name}'")))?,
            }
        }
        "conformal" => {
            let c = scalar_x(m.speed.as_deref().ok_or_else(|| missing("speed"))?)?;
            Arc::new(Conformal::new(n, c))
        }
        "metric" => {
            let g = matrix_x(m.cometric.as_ref().ok_or_else(|| missing("cometric"))?)?;
            let probe = Vector::zeros(n);
            let gm = g(&probe);
            let e = gm.clone().symmetric_eigenvalues();
            if e.iter().all(|v| *v > 0.0) {
                Arc::new(crate::hamiltonians::make_riemannian(n, g, &probe)?) as Model
            } else {
                Arc::new(crate::hamiltonians::make_pseudo_riemannian(n, g, &probe)?) as Model
            }
        }
        "expression" => {
            let src = m.value.as_deref().ok_or_else(|| missing("value"))?;
            Arc::new(Custom::new(n, src, phase_scalar(src)?))
        }
        "scaled" => {
            let base = build_model(m.base.as_deref().ok_or_else(|| missing("base"))?)?;
            let mu = phase_scalar(m.factor.as_deref().ok_or_else(|| missing("factor"))?)?;
            Arc::new(Scaled::new(base, mu))
        }
        other => return Err(Error::ConfigParse(format!("unknown model kind '{other}'"))),
    })
}

pub fn build_domain(d: &DomainSpec, n: usize) -> Result<Domain> {
    let n = d.dim.unwrap_or(n);
    Ok(match d.shape.as_str() {
        "half_space" => shapes::half_space(n),
        "disk" => shapes::disk(d.radius.unwrap_or(1.0)),
        "ball" => shapes::ball(n, d.radius.unwrap_or(1.0)),
        "slab" => shapes::slab(n, d.axis.unwrap_or(n - 1), d.lo.unwrap_or(0.0), d.hi.unwrap_or(1.0)),
        "expression" => {
            let rho = scalar_x(d.rho.as_deref().ok_or_else(|| Error::ConfigParse("domain.rho is missing".into()))?)?;
            let mut charts: Vec<Chart> = Vec::new();
            for (k, c) in d.charts.iter().enumerate() {
                let es = c.param.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
                charts.push(Arc::new(ClosureChart {
                    label: format!("chart{k}"),
                    n,
                    param: Arc::new(move |u: &Vector| {
                        let vars = Vars {
                            u: u.as_slice(),
                            ..Default::default()
                        };
                        Vector::from_iterator(es.len(), es.iter().map(|e| e.eval(&vars)))
                    }),
                    u0: Vector::from_column_slice(&c.u0),
                    tol: 1e-9,
                }));
            }
            Domain::new("expression", n, rho, None, charts)
        }
        other => return Err(Error::ConfigParse(format!("unknown shape '{other}'"))),
    })
}

pub fn build_finsler(f: &FinslerSpec) -> Result<Finsler> {
    let n = f.dim;
    let probes = vec![Vector::zeros(n)];
    Ok(match f.kind.as_str() {
        "builtin" => {
            let name = f.name.as_deref().unwrap_or("");
            finsler::builtin::by_name(name, n).ok_or_else(|| Error::ConfigParse(format!("unknown finsler builtin '{name}'")))?
        }
        "riemannian" => {
            let g = matrix_x(f.metric.as_ref().ok_or_else(|| Error::ConfigParse("finsler.metric is missing".into()))?)?;
            Arc::new(Riemannian::new(n, g, &probes)?)
        }
        "randers" => {
            let a: Arc<dyn Fn(&Vector) -> Matrix + Send + Sync> = match &f.metric {
                Some(rows) => matrix_x(rows)?,
                None => Arc::new(move |_| Matrix::identity(n, n)),
            };
            let es = f
                .drift
                .as_ref()
                .ok_or_else(|| Error::ConfigParse("finsler.drift is missing".into()))?
                .iter()
                .map(|s| Expr::parse(s))
                .collect::<Result<Vec<_>>>()?;
            let b = Arc::new(move |x: &Vector| {
                let vars = Vars {
                    x: x.as_slice(),
                    ..Default::default()
                };
                Vector::from_iterator(es.len(), es.iter().map(|e| e.eval(&vars)))
            });
            Arc::new(Randers::new(n, a, b, &probes)?)
        }
        other => return Err(Error::ConfigParse(format!("unknown finsler kind '{other}'"))),
    })
}

pub fn build_gauge(g: &GaugeSpec) -> Result<CanonicalMap> {
    let bump = Bump::new(&g.center, g.radius);
    Ok(match g.kind.as_str() {
        "bump_lift" => bump_lift(bump, g.eps, &g.direction),
        "bump_generating" => bump_generating(bump, g.eps),
        other => return Err(Error::ConfigParse(format!("unknown gauge '{other}'"))),
    })
}

/// `H∘κ₀⁻¹` for a planted gauge.
pub fn transported(h: &Model, g: &GaugeSpec) -> Result<Model> {
    Ok(Arc::new(Transported::new(h.clone(), build_gauge(g)?)))
}

/// Default entry positions on `chart` of a built-in shape.
pub fn default_entry_u(d: &DomainSpec, chart: usize, n: usize) -> Vec<f64> {
    match d.shape.as_str() {
        "disk" => vec![if chart == 1 { PI } else { 0.0 }],
        "expression" => d.charts.get(chart).map(|c| c.u0.clone()).unwrap_or_else(|| vec![0.0; n - 1]),
        _ => vec![0.0; n - 1],
    }
}

/// Names reported by `list-builtins`.
pub fn builtin_listing() -> BTreeMap<&'static str, Vec<&'static str>> {
    let mut m = BTreeMap::new();
    m.insert("models", builtin::NAMES.to_vec());
    m.insert("domains", shapes::NAMES.to_vec());
    m.insert("finsler", finsler::builtin::NAMES.to_vec());
    m.insert("gauges", vec!["bump_lift", "bump_generating"]);
    m.insert("experiments", ExperimentKind::ALL.iter().map(|e| e.as_str()).collect());
    m
}
