//! Experiment runners. Each one reads its parameters from the scenario,
//! writes its tables through the [`Sink`] and returns threshold checks.
//!
//! Random draws happen before any parallel section, and parallel results are
//! collected in ray order, so outputs do not depend on the thread count.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{self, ExperimentKind, Scenario};
use super::output::{indexed, num, nums, Check, Sink, Table};
use crate::boundary::{restrict_in_chart, solve_zeta, BoundaryCovector, Branch, Domain};
use crate::canonical::{
    boundary_residual, build_psi, conjugation_residual, entry_of, kappa_from_pair, kappa_zero_energy, pullback_residual,
    scattering_agreement, CanonicalMap, KappaReport,
};
use crate::error::{Error, Result};
use crate::finsler::{self, Finsler};
use crate::flow::{self, IntegratorConfig};
use crate::hamiltonians::{Model, PhasePoint};
use crate::linalg::Vector;
use crate::scattering::{inverse_residual, lambda_consistency, scatter, ScatterRecord};
use crate::transforms::{gauge_potential, ray_integrals, PhaseFunction};
use crate::traveltime::{generating_check, travel_time, ChartPoint};

/// Shared state of one run.
pub struct Run<'a> {
    pub sc: &'a Scenario,
    pub cfg: IntegratorConfig,
    pub pool: &'a rayon::ThreadPool,
    pub rng: ChaCha8Rng,
    pub checks: Vec<Check>,
}

impl<'a> Run<'a> {
    pub fn new(sc: &'a Scenario, pool: &'a rayon::ThreadPool) -> Self {
        Run {
            sc,
            cfg: sc.integrator.clone(),
            pool,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            checks: Vec::new(),
        }
    }

    /// Record `value ≤ threshold`, where the scenario may override the default.
    fn check(&mut self, name: &str, value: f64, default: f64) {
        let threshold = self.sc.tolerances.get(name).copied().unwrap_or(default);
        self.checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            pass: value <= threshold,
        });
    }

    fn par<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> Result<R> + Sync + Send,
    {
        self.pool
            .install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
    }

    fn model(&self) -> Result<Model> {
        let m = self.sc.model.as_ref().ok_or_else(|| Error::ConfigParse("model is missing".into()))?;
        config::build_model(m)
    }

    fn dim(&self) -> usize {
        self.sc
            .model
            .as_ref()
            .map(|m| m.dim)
            .or(self.sc.finsler.as_ref().map(|f| f.dim))
            .unwrap_or(2)
    }

    fn domain(&self) -> Result<Arc<Domain>> {
        let d = self.sc.domain.as_ref().ok_or_else(|| Error::ConfigParse("domain is missing".into()))?;
        Ok(Arc::new(config::build_domain(d, self.dim())?))
    }

    /// `H̃`: either `model_tilde` or `H∘κ₀⁻¹` for the planted gauge.
    fn model_tilde(&self, h: &Model) -> Result<Model> {
        match (&self.sc.model_tilde, &self.sc.gauge) {
            (Some(m), _) => config::build_model(m),
            (None, Some(g)) => config::transported(h, g),
            (None, None) => Err(Error::ConfigParse("model_tilde or gauge is required".into())),
        }
    }

    fn gauge(&self) -> Result<Option<CanonicalMap>> {
        self.sc.gauge.as_ref().map(config::build_gauge).transpose()
    }

    /// Fan of boundary covectors on `params.chart`; ray `k` of `rays` takes
    /// `ξ′₁ = (a + b)/2 + (b − a)((k + ½)/rays − ½)`, other components zero.
    fn fan(&self, energy: f64) -> Vec<BoundaryCovector> {
        let p = &self.sc.params;
        let n = self.dim();
        let us = if p.entry_u.is_empty() {
            vec![self
                .sc
                .domain
                .as_ref()
                .map(|d| config::default_entry_u(d, p.chart, n))
                .unwrap_or_else(|| vec![0.0; n - 1])]
        } else {
            p.entry_u.clone()
        };
        let xis: Vec<Vec<f64>> = if !p.xi_prime.is_empty() {
            p.xi_prime.clone()
        } else {
            let half = 0.45 * (2.0 * energy).sqrt();
            let [a, b] = p.xi_prime_range.unwrap_or([-half, half]);
            (0..p.rays)
                .map(|k| {
                    let mut v = vec![0.0; n - 1];
                    v[0] = 0.5 * (a + b) + (b - a) * ((k as f64 + 0.5) / p.rays as f64 - 0.5);
                    v
                })
                .collect()
        };
        us.iter()
            .flat_map(|u| xis.iter().map(move |xi| BoundaryCovector::new(p.chart, u, xi)))
            .collect()
    }
}

fn record_row(rec: &ScatterRecord) -> Vec<String> {
    let mut r = vec![rec.entry_bc.chart.to_string()];
    r.extend(nums(rec.entry_bc.u.as_slice()));
    r.extend(nums(rec.entry_bc.xi_prime.as_slice()));
    r.push(rec.exit_bc.chart.to_string());
    r.extend(nums(rec.exit_bc.u.as_slice()));
    r.extend(nums(rec.exit_bc.xi_prime.as_slice()));
    r.push(num(rec.ell));
    r.push(num(rec.energy));
    r.push(u8::from(rec.transversal_entry && rec.transversal_exit).to_string());
    r
}

fn scatter_columns(n: usize) -> Vec<String> {
    let mut c = vec!["entry_chart".to_string()];
    c.extend(indexed("entry_u", n - 1));
    c.extend(indexed("entry_xi_prime", n - 1));
    c.push("exit_chart".into());
    c.extend(indexed("exit_u", n - 1));
    c.extend(indexed("exit_xi_prime", n - 1));
    c.extend(["ell".into(), "energy".into(), "flag_transversal".into()]);
    c
}

fn sinogram_columns(n: usize) -> Vec<String> {
    let mut c = vec!["ray".to_string(), "entry_chart".into()];
    c.extend(indexed("entry_u", n - 1));
    c.extend(indexed("entry_xi_prime", n - 1));
    c.push("value".into());
    c
}

fn phase_columns(n: usize) -> Vec<String> {
    let mut c = indexed("x", n);
    c.extend(indexed("xi", n));
    c
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

pub fn run(kind: ExperimentKind, run: &mut Run, sink: &mut Sink) -> Result<()> {
    match kind {
        ExperimentKind::Flow => flow_experiment(run, sink),
        ExperimentKind::ScatterFan => scatter_fan(run, sink),
        ExperimentKind::TraveltimeTable => traveltime_table(run, sink),
        ExperimentKind::XraySinogram => ray_transform(run, sink, 0.5),
        ExperimentKind::Lightray => ray_transform(run, sink, 0.0),
        ExperimentKind::KappaValidate => kappa_validate(run, sink),
        ExperimentKind::FinslerSuite => finsler_suite(run, sink),
        ExperimentKind::ZeroEnergySuite => zero_energy_suite(run, sink),
    }
}

fn flow_experiment(run: &mut Run, sink: &mut Sink) -> Result<()> {
    let h = run.model()?;
    let n = h.dim();
    let p = &run.sc.params;
    let mut points: Vec<PhasePoint> = p.points.iter().map(|v| PhasePoint::from_state(v, n)).collect();
    for _ in 0..p.random_points {
        let x: Vec<f64> = (0..n).map(|_| run.rng.random_range(-0.5..0.5)).collect();
        let xi: Vec<f64> = (0..n).map(|_| run.rng.random_range(-1.0..1.0)).collect();
        points.push(PhasePoint::new(&x, &xi));
    }
    let cfg = run.cfg.clone().jacobian(p.jacobian);
    let (t_end, samples) = (p.t_end, p.samples.max(2));
    let out = run.par(&points, |_, p0| {
        let tr = flow::integrate(h.as_ref(), p0, (0.0, t_end), &cfg)?;
        let mut t = Table::new(["t".to_string()].into_iter().chain(phase_columns(n)).chain(["H".to_string()]));
        for k in 0..samples {
            let s = t_end * k as f64 / (samples - 1) as f64;
            let q = tr.point_at(s);
            let mut row = vec![num(s)];
            row.extend(nums(q.state().as_slice()));
            row.push(num(h.eval(&q)));
            t.push(row);
        }
        Ok((t, tr.energy_drift(h.as_ref()), tr.symplectic_drift()))
    })?;
    for (i, (t, _, _)) in out.iter().enumerate() {
        sink.table(&format!("traj_{i:03}.csv"), t)?;
    }
    run.check("energy_drift", max(out.iter().map(|o| o.1)), 1e-8);
    if p.jacobian {
        run.check("symplectic", max(out.iter().filter_map(|o| o.2)), 1e-6);
    }
    Ok(())
}

fn scatter_fan(run: &mut Run, sink: &mut Sink) -> Result<()> {
    let h = run.model()?;
    let d = run.domain()?;
    let n = h.dim();
    let e = run.sc.params.energy;
    let fan = run.fan(e);
    let cfg = run.cfg.clone();
    let lambdas = run.sc.params.lambdas.clone();
    let out = run.par(&fan, |_, bc| {
        let rec = scatter(h.as_ref(), &d, bc, e, Branch::Incoming, &cfg)?;
        let defect = rec.energy_defect(h.as_ref());
        let inv = inverse_residual(h.as_ref(), &d, &rec, &cfg)?;
        let mut lam: f64 = 0.0;
        for &l in &lambdas {
            if e > 0.0 {
                let (a, b) = lambda_consistency(h.as_ref(), &d, &bc.scaled(l), l, &cfg)?;
                lam = lam.max(a).max(b);
            } else {
                // S₀ is homogeneous of order one, ℓ₊ of order minus one
                let r = scatter(h.as_ref(), &d, &bc.scaled(l), 0.0, Branch::Incoming, &cfg)?;
                let ex = restrict_in_chart(&d, rec.exit_bc.chart, &r.exit)?;
                lam = lam.max(ex.dist(&rec.exit_bc.scaled(l))).max((r.ell * l - rec.ell).abs());
            }
        }
        Ok((record_row(&rec), defect, inv, lam))
    })?;
    let mut t = Table::new(scatter_columns(n));
    for o in &out {
        t.push(o.0.clone());
    }
    sink.table("scatter.csv", &t)?;
    let level_tol = if e == 0.0 { 1e-10 } else { 1e-8 };
    run.check("energy_defect", max(out.iter().map(|o| o.1)), level_tol);
    run.check("inverse", max(out.iter().map(|o| o.2)), 1e-6);
    if !lambdas.is_empty() {
        let name = if e > 0.0 { "lambda_consistency" } else { "homogeneity" };
        run.check(name, max(out.iter().map(|o| o.3)), if e > 0.0 { 1e-7 } else { 1e-8 });
    }
    Ok(())
}

fn traveltime_table(run: &mut Run, sink: &mut Sink) -> Result<()> {
    let h = run.model()?;
    let n = h.dim();
    let cfg = run.cfg.clone();
    let pairs: Vec<(Vector, Vector)> = run
        .sc
        .params
        .pairs
        .iter()
        .map(|v| (Vector::from_column_slice(&v[..n]), Vector::from_column_slice(&v[n..])))
        .collect();
    let out = run.par(&pairs, |_, (x, y)| travel_time(h.as_ref(), x, y, None, &cfg))?;
    let mut cols = indexed("x", n);
    cols.extend(indexed("y", n));
    cols.extend(["T".into(), "iters".into(), "det".into()]);
    let mut t = Table::new(cols);
    for ((x, y), r) in pairs.iter().zip(&out) {
        let mut row = nums(x.as_slice());
        row.extend(nums(y.as_slice()));
        row.extend([num(r.t), r.newton_iters.to_string(), num(r.exp_jacobian_det)]);
        t.push(row);
    }
    sink.table("traveltime.csv", &t)?;
    if !out.is_empty() {
        run.check("endpoint_error", max(out.iter().map(|r| r.endpoint_error)), 1e-9);
    }

    let m = run.sc.params.boundary_pairs;
    if m > 0 {
        let d = run.domain()?;
        let charts = d.charts();
        if charts.len() < 2 {
            return Err(Error::ConfigParse("boundary_pairs needs a domain with at least two charts".into()));
        }
        let (ca, cb) = (0, charts.len() - 1);
        let spec = run.sc.domain.as_ref().unwrap();
        let (ua, ub) = (config::default_entry_u(spec, ca, n), config::default_entry_u(spec, cb, n));
        let bp: Vec<(ChartPoint, ChartPoint)> = (0..m)
            .map(|_| {
                let a: Vec<f64> = ua.iter().map(|u| u + run.rng.random_range(-0.5..0.5)).collect();
                let b: Vec<f64> = ub.iter().map(|u| u + run.rng.random_range(-0.5..0.5)).collect();
                (ChartPoint::new(ca, &a), ChartPoint::new(cb, &b))
            })
            .collect();
        let res = run.par(&bp, |_, (a, b)| generating_check(h.as_ref(), &d, a, b, None, &cfg))?;
        let records: Vec<_> = bp
            .iter()
            .zip(&res)
            .map(|((a, b), r)| {
                serde_json::json!({
                    "x_chart": a.chart, "x_u": a.u.as_slice(),
                    "y_chart": b.chart, "y_u": b.u.as_slice(),
                    "T": r.t, "r_a": r.r_a, "r_b": r.r_b,
                })
            })
            .collect();
        sink.json("generating.json", &records)?;
        run.check("generating_r_a", max(res.iter().map(|r| r.r_a)), 1e-4);
        run.check("generating_r_b", max(res.iter().map(|r| r.r_b)), 1e-4);
    }
    Ok(())
}

fn ray_transform(run: &mut Run, sink: &mut Sink, energy: f64) -> Result<()> {
    let h = run.model()?;
    let d = run.domain()?;
    let n = h.dim();
    let p = &run.sc.params;
    let f = PhaseFunction::new("f", 0, config::phase_scalar(p.integrand.as_deref().unwrap_or("1"))?);
    let phi0 = p
        .gauge_potential
        .as_deref()
        .map(|s| Ok::<_, Error>(PhaseFunction::new("phi0", 1, config::phase_scalar(s)?)))
        .transpose()?;
    let xhphi = phi0.as_ref().map(|phi| PhaseFunction::hamilton_derivative(h.clone(), phi));
    let fan = run.fan(energy);
    let cfg = run.cfg.clone();
    let out = run.par(&fan, |_, bc| {
        let entry = solve_zeta(h.as_ref(), &d, bc, energy, Branch::Incoming)?;
        let mut fs = vec![&f];
        if let Some(g) = &xhphi {
            fs.push(g);
        }
        let (vals, ell) = ray_integrals(h.as_ref(), &d, &fs, &entry, &cfg)?;
        let gauge = match (&phi0, &xhphi) {
            (Some(phi), Some(g)) => {
                let mid = flow::flow_map(h.as_ref(), &entry, 0.5 * ell, &cfg)?;
                let rec = gauge_potential(h.as_ref(), &d, g, &mid, &cfg)?;
                Some((mid.clone(), phi.eval(&mid), rec))
            }
            _ => None,
        };
        Ok((vals, ell, gauge))
    })?;
    let mut t = Table::new(sinogram_columns(n));
    for (k, (bc, o)) in fan.iter().zip(&out).enumerate() {
        let mut row = vec![k.to_string(), bc.chart.to_string()];
        row.extend(nums(bc.u.as_slice()));
        row.extend(nums(bc.xi_prime.as_slice()));
        row.push(num(o.0[0]));
        t.push(row);
    }
    let name = if energy > 0.0 { "sinogram.csv" } else { "lightray.csv" };
    sink.table(name, &t)?;
    if xhphi.is_some() {
        let kernel = max(out.iter().map(|o| o.0[1].abs() / o.1.max(1e-300)));
        run.check("kernel", kernel, if energy > 0.0 { 1e-7 } else { 1e-8 });
        let mut g = Table::new(
            ["ray".to_string()]
                .into_iter()
                .chain(phase_columns(n))
                .chain(["phi0".to_string(), "phi_reconstructed".to_string()]),
        );
        for (k, o) in out.iter().enumerate() {
            let (mid, a, b) = o.2.as_ref().unwrap();
            let mut row = vec![k.to_string()];
            row.extend(nums(mid.state().as_slice()));
            row.extend([num(*a), num(*b)]);
            g.push(row);
        }
        sink.table("gauge.csv", &g)?;
        run.check(
            "gauge_reconstruction",
            max(out.iter().map(|o| o.2.as_ref().map(|g| (g.1 - g.2).abs()).unwrap())),
            1e-6,
        );
    }
    Ok(())
}

/// Midpoints of the fan rays, as interior sample points.
fn fan_midpoints(h: &Model, d: &Domain, fan: &[BoundaryCovector], energy: f64, run: &Run) -> Result<Vec<PhasePoint>> {
    let cfg = run.cfg.clone();
    run.par(fan, |_, bc| {
        let rec = scatter(h.as_ref(), d, bc, energy, Branch::Incoming, &cfg)?;
        flow::flow_map(h.as_ref(), &rec.entry, 0.5 * rec.ell, &cfg)
    })
}

fn kappa_validate(run: &mut Run, sink: &mut Sink) -> Result<()> {
    let h = run.model()?;
    let ht = run.model_tilde(&h)?;
    let d = run.domain()?;
    let n = h.dim();
    let p = &run.sc.params;
    let (e, chart) = (p.energy, p.chart);
    let s = p.s_grid.first().copied().unwrap_or(0.1);
    let cfg = run.cfg.clone();
    let psi = build_psi(h.clone(), d.clone(), chart, &cfg)?;
    let psit = build_psi(ht.clone(), d.clone(), chart, &cfg)?;
    let kappa = kappa_from_pair(&psi, &psit)?;
    let gauge = run.gauge()?;
    let fan = run.fan(e);
    let points = if p.points.is_empty() {
        fan_midpoints(&h, &d, &fan, e, run)?
    } else {
        p.points.iter().map(|v| PhasePoint::from_state(v, n)).collect()
    };
    let reports = run.par(&points, |_, q| {
        let (entry, _) = entry_of(h.as_ref(), &d, q, &cfg)?;
        let rep = KappaReport {
            symplectic: kappa.symplectic_residual(q)?,
            hamiltonian_pullback: pullback_residual(&kappa, h.as_ref(), ht.as_ref(), q)?,
            conjugation: conjugation_residual(&kappa, h.as_ref(), ht.as_ref(), q, s, &cfg)?,
            boundary: boundary_residual(&kappa, &d, chart, &entry)?,
        };
        let recovery = match &gauge {
            Some(g) => Some(kappa.apply(q)?.dist(&g.apply(q)?)),
            None => None,
        };
        Ok((rep, recovery))
    })?;
    let psi_sym = run.par(&fan, |_, bc| {
        let mut z = bc.u.as_slice().to_vec();
        z.push(0.0);
        z.extend_from_slice(bc.xi_prime.as_slice());
        z.push(e);
        psi.symplectic_residual(&Vector::from_vec(z))
    })?;
    let agreement = scattering_agreement(h.as_ref(), ht.as_ref(), &d, &fan, e, &cfg)?;

    let records: Vec<_> = points
        .iter()
        .zip(&reports)
        .map(|(q, (r, rec))| {
            serde_json::json!({
                "x": q.x.as_slice(), "xi": q.xi.as_slice(),
                "symplectic": r.symplectic,
                "hamiltonian_pullback": r.hamiltonian_pullback,
                "conjugation": r.conjugation,
                "boundary": r.boundary,
                "recovery": rec,
            })
        })
        .collect();
    sink.json("kappa_report.json", &records)?;
    let all: Vec<KappaReport> = reports.iter().map(|r| r.0).collect();
    let w = KappaReport::worst(&all);
    run.check("psi_symplectic", max(psi_sym), 1e-6);
    run.check("symplectic", w.symplectic, 1e-6);
    run.check("hamiltonian_pullback", w.hamiltonian_pullback, 1e-6);
    run.check("conjugation", w.conjugation, 1e-5);
    run.check("boundary", w.boundary, 1e-8);
    run.check("scattering_agreement", agreement, 1e-6);
    if gauge.is_some() {
        run.check("recovery", max(reports.iter().filter_map(|r| r.1)), 1e-6);
    }
    Ok(())
}

/// Unit vectors at `x` making angle `a` with the inward normal.
fn fan_direction(fm: &dyn finsler::FinslerModel, d: &Domain, x: &Vector, a: f64) -> Vector {
    let nu = d.grad_rho(x).normalize();
    let n = x.len();
    let mut e = Vector::zeros(n);
    // first coordinate axis not parallel to the normal
    for k in 0..n {
        let mut c = Vector::zeros(n);
        c[k] = 1.0;
        let w = &c - &nu * nu.dot(&c);
        if w.norm() > 1e-3 {
            e = w.normalize();
            break;
        }
    }
    let v = &nu * a.cos() + e * a.sin();
    &v / fm.norm(x, &v)
}

fn finsler_suite(run: &mut Run, sink: &mut Sink) -> Result<()> {
    let spec = run.sc.finsler.as_ref().ok_or_else(|| Error::ConfigParse("finsler is missing".into()))?;
    let fm: Finsler = config::build_finsler(spec)?;
    let d = run.domain()?;
    let n = fm.dim();
    let p = &run.sc.params;
    let us = if p.entry_u.is_empty() {
        vec![config::default_entry_u(run.sc.domain.as_ref().unwrap(), p.chart, n)]
    } else {
        p.entry_u.clone()
    };
    let mut entries = Vec::new();
    for u in &us {
        let x = d.point(p.chart, &Vector::from_column_slice(u))?;
        for k in 0..p.rays {
            let a = -p.angle_max + 2.0 * p.angle_max * (k as f64 + 0.5) / p.rays as f64;
            entries.push((x.clone(), fan_direction(fm.as_ref(), &d, &x, a)));
        }
    }
    let cfg = run.cfg.clone();
    let out = run.par(&entries, |_, (x, v)| {
        let s = finsler::finsler_scatter(fm.clone(), &d, x, v, &cfg)?;
        let mid = finsler::geodesic_flow(fm.as_ref(), x, v, 0.5 * s.ell, &cfg)?;
        let leg = fm.legendre(&mid.0, &mid.1);
        let identity = (fm.fundamental_tensor(&mid.0, &mid.1) * &mid.1 - &leg).amax();
        let back = finsler::legendre_inverse(fm.as_ref(), &mid.0, &leg, None)?;
        let roundtrip = (back - &mid.1).amax();
        let conj = finsler::conjugation_check(fm.clone(), x, v, 0.5 * s.ell, &cfg)?;
        Ok((s, mid, identity, roundtrip, conj))
    })?;
    let mut cols = vec!["ray".to_string()];
    cols.extend(indexed("x", n));
    cols.extend(indexed("v", n));
    cols.extend(indexed("exit_x", n));
    cols.extend(indexed("exit_v", n));
    cols.extend(["ell".into(), "lagrangian_ell".into(), "route_residual".into()]);
    let mut t = Table::new(cols);
    for (k, ((x, v), o)) in entries.iter().zip(&out).enumerate() {
        let s = &o.0;
        let mut row = vec![k.to_string()];
        row.extend(nums(x.as_slice()));
        row.extend(nums(v.as_slice()));
        row.extend(nums(&s.exit_x));
        row.extend(nums(&s.exit_v));
        row.extend([num(s.ell), num(s.lagrangian_ell), num(s.route_residual)]);
        t.push(row);
    }
    sink.table("finsler_fan.csv", &t)?;
    let samples: Vec<(Vector, Vector)> = out.iter().map(|o| o.1.clone()).collect();
    let mk = finsler::check_minkowski(fm.as_ref(), &samples)?;
    run.check("minkowski_homogeneity", mk.homogeneity, 1e-10);
    run.check("legendre_identity", max(out.iter().map(|o| o.2)), 1e-7);
    run.check("legendre_roundtrip", max(out.iter().map(|o| o.3)), 1e-8);
    run.check("flow_conjugation", max(out.iter().map(|o| o.4)), 1e-5);
    run.check("route_agreement", max(out.iter().map(|o| o.0.route_residual)), 1e-5);
    if let Some(g) = run.gauge()? {
        let probes: Vec<PhasePoint> = samples
            .iter()
            .map(|(x, v)| PhasePoint::from_vectors(x.clone(), fm.legendre(x, v)))
            .collect();
        let rep = finsler::finsler_direct_problem(fm.clone(), g, &d, &entries, &probes, &cfg)?;
        sink.json("direct_problem.json", &rep)?;
        run.check("direct_problem", rep.worst(), 1e-5);
    }
    Ok(())
}

fn zero_energy_suite(run: &mut Run, sink: &mut Sink) -> Result<()> {
    let h = run.model()?;
    let ht = run.model_tilde(&h)?;
    let d = run.domain()?;
    let n = h.dim();
    let p = &run.sc.params;
    let chart = p.chart;
    let s_grid = p.s_grid.clone();
    let t = s_grid.first().copied().unwrap_or(0.1);
    let cfg = run.cfg.clone();
    let z = kappa_zero_energy(h.clone(), ht.clone(), d.clone(), chart, &cfg)?;
    let expected = p.mu_expected.as_deref().map(config::phase_scalar).transpose()?;
    let gauge = run.gauge()?;
    let fan = run.fan(0.0);
    let out = run.par(&fan, |_, bc| {
        let entry = solve_zeta(h.as_ref(), &d, bc, 0.0, Branch::Incoming)?;
        let rec = scatter(h.as_ref(), &d, bc, 0.0, Branch::Incoming, &cfg)?;
        let q = flow::flow_map(h.as_ref(), &entry, 0.5 * rec.ell, &cfg)?;
        let mu = z.mu.eval(&q);
        let mu_err = expected.as_ref().map(|m| (mu - m(&q.x, &q.xi)).abs());
        let coincidence = match &expected {
            Some(m) => {
                let m = m.clone();
                let r = flow::reparametrize_mu(h.as_ref(), move |x: &Vector, xi: &Vector| m(x, xi), &entry, &s_grid, &cfg)?;
                Some(r.coincidence)
            }
            None => None,
        };
        let recovery = match &gauge {
            Some(g) => Some(z.apply(&q)?.dist(&g.apply(&q)?)),
            None => None,
        };
        Ok((
            q.clone(),
            mu,
            mu_err,
            coincidence,
            recovery,
            z.tangential_symplectic_residual(&q)?,
            z.conjugation_residual(&q, t)?,
            z.mu_flow_invariance(&q, 1e-3)?,
            z.travel_time_match(&entry)?,
            h.eval(&q).abs().max(ht.eval(&z.apply(&q)?).abs()),
        ))
    })?;
    let mut cols = vec!["ray".to_string()];
    cols.extend(phase_columns(n));
    cols.extend(
        ["mu", "tangential_symplectic", "conjugation", "flow_invariance", "travel_time_match"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut tab = Table::new(cols);
    for (k, o) in out.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(nums(o.0.state().as_slice()));
        row.extend([num(o.1), num(o.5), num(o.6), num(o.7), num(o.8)]);
        tab.push(row);
    }
    sink.table("zero_energy.csv", &tab)?;
    run.check("zero_level", max(out.iter().map(|o| o.9)), 1e-10);
    run.check("tangential_symplectic", max(out.iter().map(|o| o.5)), 1e-5);
    run.check("conjugation", max(out.iter().map(|o| o.6)), 1e-5);
    run.check("mu_flow_invariance", max(out.iter().map(|o| o.7)), 1e-5);
    run.check("travel_time_match", max(out.iter().map(|o| o.8)), 1e-6);
    if expected.is_some() {
        run.check("mu_recovery", max(out.iter().filter_map(|o| o.2)), 1e-5);
        run.check("reparametrization", max(out.iter().filter_map(|o| o.3)), 1e-6);
    }
    if gauge.is_some() {
        run.check("recovery", max(out.iter().filter_map(|o| o.4)), 1e-5);
    }
    Ok(())
}
