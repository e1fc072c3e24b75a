//! Exponential map, conjugate points, two-point travel times and the
//! variational identities they satisfy.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boundary::{restrict_in_chart, Domain};
use crate::error::{Error, Result};
use crate::flow::{flow_map, flow_map_with_jacobian, integrate, IntegratorConfig};
use crate::hamiltonians::{Hamiltonian, Model, PhasePoint};
use crate::linalg::{solve, Matrix, Vector};
use crate::scattering::scatter_hat;

/// A one-parameter family of models `s ↦ H(·, ·; s)`.
pub type Family = Arc<dyn Fn(f64) -> Model + Send + Sync>;

/// Initial data of the `H(s)`-curves used by [`variation_energy_check`].
pub type CurveFamily = Arc<dyn Fn(f64) -> PhasePoint + Send + Sync>;

pub const CONJUGATE_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 50;
const BOUNDARY_STEP: f64 = 1e-4;
const S_STEP: f64 = 1e-4;
const QUAD_TOL: f64 = 1e-9;

/// Solution of the two-point problem.
#[derive(Clone, Debug, Serialize)]
pub struct ShootResult {
    pub xi0: Vec<f64>,
    /// Travel time at unit energy, `(2H(x, ξ₀))^{1/2}`.
    pub t: f64,
    pub endpoint_error: f64,
    pub exp_jacobian_det: f64,
    pub newton_iters: usize,
}

impl ShootResult {
    pub fn xi0(&self) -> Vector {
        Vector::from_column_slice(&self.xi0)
    }
}

/// `π Φ¹(x, ξ)` and its `ξ`-Jacobian.
pub fn exp_map(model: &dyn Hamiltonian, x: &Vector, xi: &Vector, cfg: &IntegratorConfig) -> Result<(Vector, Matrix)> {
    let n = x.len();
    let p = PhasePoint::from_vectors(x.clone(), xi.clone());
    p.validate()?;
    let (q, m) = flow_map_with_jacobian(model, &p, 1.0, cfg)?;
    Ok((q.x, m.view((0, n), (n, n)).into_owned()))
}

/// Conjugacy test at `exp_x ξ`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConjugateTest {
    pub det: f64,
    /// `|det H_ξξ(x, ξ)|`, the small-`ξ` limit of the Jacobian determinant.
    pub reference: f64,
    pub conjugate: bool,
}

pub fn is_conjugate(model: &dyn Hamiltonian, x: &Vector, xi: &Vector, cfg: &IntegratorConfig) -> Result<ConjugateTest> {
    let (_, j) = exp_map(model, x, xi, cfg)?;
    let n = x.len();
    let reference = model.hessian(x, xi).view((n, n), (n, n)).determinant().abs();
    let det = j.determinant();
    Ok(ConjugateTest {
        det,
        reference,
        conjugate: det.abs() < CONJUGATE_TOL * reference,
    })
}

/// First `t ∈ (0, t_max]` where `det ∂_ξ π Φ^t(x, ξ)` changes sign.
pub fn first_conjugate_time(
    model: &dyn Hamiltonian,
    x: &Vector,
    xi: &Vector,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>> {
    let n = x.len();
    let p = PhasePoint::from_vectors(x.clone(), xi.clone());
    let tr = integrate(model, &p, (0.0, t_max), &cfg.clone().jacobian(true))?;
    let det_at = |t: f64| tr.jacobian_at(t).unwrap().view((0, n), (n, n)).determinant();
    let mut prev: Option<(f64, f64)> = None;
    let samples: Vec<f64> = tr
        .steps()
        .iter()
        .flat_map(|s| (1..=8).map(move |k| s.t0 + s.h * k as f64 / 8.0))
        .collect();
    for t in samples {
        let d = det_at(t);
        if let Some((tp, dp)) = prev {
            if dp * d < 0.0 || d == 0.0 {
                let (mut a, mut b, mut da) = (tp, t, dp);
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    let dm = det_at(m);
                    if dm * da > 0.0 {
                        a = m;
                        da = dm;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-14 * t_max {
                        break;
                    }
                }
                return Ok(Some(0.5 * (a + b)));
            }
        }
        prev = Some((t, d));
    }
    Ok(None)
}

/// Damped Newton for `exp_x ξ = y` from `seed`, without energy normalization.
pub fn shoot(
    model: &dyn Hamiltonian,
    x: &Vector,
    y: &Vector,
    seed: &Vector,
    cfg: &IntegratorConfig,
) -> Result<(Vector, usize, f64, f64)> {
    let scale = (y - x).amax().max(1.0);
    let tol = 1e-12 * scale;
    let mut xi = seed.clone();
    let (e0, mut j) = exp_map(model, x, &xi, cfg)?;
    let mut r = y - &e0;
    let mut err = r.amax();
    for it in 0..=MAX_NEWTON {
        if err <= tol {
            return Ok((xi, it, err, j.determinant()));
        }
        if it == MAX_NEWTON {
            break;
        }
        let n = x.len();
        let reference = model.hessian(x, &xi).view((n, n), (n, n)).determinant().abs();
        if j.determinant().abs() < CONJUGATE_TOL * reference {
            return Err(Error::ConjugatePoint(j.determinant()));
        }
        let d = solve(&j, &r).map_err(|_| Error::ConjugatePoint(j.determinant()))?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &xi + &d * step;
            if cand.amax() > 0.0 {
                if let Ok((ec, jc)) = exp_map(model, x, &cand, cfg) {
                    let rc = y - &ec;
                    if rc.amax() < err {
                        xi = cand;
                        j = jc;
                        r = rc;
                        err = r.amax();
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // stagnation at the integration noise floor counts as converged
            if err <= 1e-9 * scale {
                return Ok((xi, it, err, j.determinant()));
            }
            return Err(Error::NewtonDiverged(format!("no decrease at iteration {it}, error {err:.3e}")));
        }
    }
    if err <= 1e-9 * scale {
        return Ok((xi, MAX_NEWTON, err, j.determinant()));
    }
    Err(Error::NewtonDiverged(format!("{MAX_NEWTON} iterations, error {err:.3e}")))
}

pub(crate) fn unit_directions(n: usize) -> Vec<Vector> {
    match n {
        2 => (0..720)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 720.0;
                Vector::from_column_slice(&[a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let m = 1200;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    Vector::from_column_slice(&[r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..400 * n)
                .map(|_| {
                    let v = Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
                    v.normalize()
                })
                .collect()
        }
    }
}

/// Seed for [`travel_time`]: the unit-energy fan direction whose ray passes
/// closest to `y`, scaled by the time of closest approach.
pub fn fan_seed(model: &dyn Hamiltonian, x: &Vector, y: &Vector, cfg: &IntegratorConfig) -> Result<Vector> {
    let dist = (y - x).norm();
    let mut best: Option<(f64, Vector)> = None;
    for w in unit_directions(x.len()) {
        let h = model.value(x, &w);
        if !(h > 0.0) {
            continue;
        }
        let xi = w / (2.0 * h).sqrt();
        let speed = model.grad_xi(x, &xi).norm();
        let t_max = 4.0 * dist / speed;
        let p = PhasePoint::from_vectors(x.clone(), xi.clone());
        let Ok(tr) = integrate(model, &p, (0.0, t_max), &cfg.clone().jacobian(false)) else {
            continue;
        };
        let mut local = (f64::INFINITY, 0.0);
        for s in tr.steps() {
            for k in 0..=8 {
                let t = s.t0 + s.h * k as f64 / 8.0;
                let d = (&tr.point_at(t).x - y).norm();
                if d < local.0 {
                    local = (d, t);
                }
            }
        }
        if best.as_ref().is_none_or(|b| local.0 < b.0) && local.1 > 0.0 {
            best = Some((local.0, xi * local.1));
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::NewtonDiverged("fan scan found no admissible direction".into()))
}

/// `T(x, y)` by shooting; seeds from [`fan_seed`] when none is supplied.
pub fn travel_time(
    model: &dyn Hamiltonian,
    x: &Vector,
    y: &Vector,
    seed: Option<&Vector>,
    cfg: &IntegratorConfig,
) -> Result<ShootResult> {
    let seed = match seed {
        Some(s) => s.clone(),
        None => fan_seed(model, x, y, cfg)?,
    };
    let (xi0, iters, err, det) = shoot(model, x, y, &seed, cfg)?;
    let h = model.value(x, &xi0);
    if !(h > 0.0) {
        return Err(Error::NewtonDiverged(format!("connecting curve has energy {h:.3e}")));
    }
    Ok(ShootResult {
        xi0: xi0.as_slice().to_vec(),
        t: (2.0 * h).sqrt(),
        endpoint_error: err,
        exp_jacobian_det: det,
        newton_iters: iters,
    })
}

/// Residuals of the generating-function identities for `T`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GeneratingResiduals {
    /// `‖(y, d_yT) − Φ^T(x, −d_xT)‖∞` with ambient gradients.
    pub r_a: f64,
    /// `‖(−d′_xT, d′_yT) − (ξ′, η′)‖∞` against the scatter record.
    pub r_b: f64,
    pub t: f64,
}

/// Boundary point given by chart id and chart coordinates.
#[derive(Clone, Debug)]
pub struct ChartPoint {
    pub chart: usize,
    pub u: Vector,
}

impl ChartPoint {
    pub fn new(chart: usize, u: &[f64]) -> Self {
        ChartPoint {
            chart,
            u: Vector::from_column_slice(u),
        }
    }

    pub fn point(&self, domain: &Domain) -> Result<Vector> {
        domain.point(self.chart, &self.u)
    }
}

fn central<F: FnMut(&Vector) -> Result<f64>>(mut f: F, z: &Vector, h: f64) -> Result<Vector> {
    let mut g = Vector::zeros(z.len());
    for k in 0..z.len() {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[k] += h;
        zm[k] -= h;
        g[k] = (f(&zp)? - f(&zm)?) / (2.0 * h);
    }
    Ok(g)
}

pub fn generating_check(
    model: &dyn Hamiltonian,
    domain: &Domain,
    x: &ChartPoint,
    y: &ChartPoint,
    seed: Option<&Vector>,
    cfg: &IntegratorConfig,
) -> Result<GeneratingResiduals> {
    let xp = x.point(domain)?;
    let yp = y.point(domain)?;
    let base = travel_time(model, &xp, &yp, seed, cfg)?;
    let s0 = base.xi0();
    let t_xy = |a: &Vector, b: &Vector| -> Result<f64> { Ok(travel_time(model, a, b, Some(&s0), cfg)?.t) };

    let dx = central(|a| t_xy(a, &yp), &xp, BOUNDARY_STEP)?;
    let dy = central(|b| t_xy(&xp, b), &yp, BOUNDARY_STEP)?;
    let end = flow_map(model, &PhasePoint::from_vectors(xp.clone(), -&dx), base.t, cfg)?;
    let r_a = end.dist(&PhasePoint::from_vectors(yp.clone(), dy));

    let cx = domain.chart(x.chart)?.clone();
    let cy = domain.chart(y.chart)?.clone();
    let dux = central(|u| t_xy(&cx.param(u), &yp), &x.u, BOUNDARY_STEP)?;
    let duy = central(|u| t_xy(&xp, &cy.param(u)), &y.u, BOUNDARY_STEP)?;
    let unit = PhasePoint::from_vectors(xp.clone(), &s0 / base.t);
    let rec = scatter_hat(model, domain, &unit, cfg)?;
    let entry = restrict_in_chart(domain, x.chart, &rec.entry)?;
    let exit = restrict_in_chart(domain, y.chart, &rec.exit)?;
    let r_b = (-dux - &entry.xi_prime)
        .amax()
        .max((duy - &exit.xi_prime).amax())
        .max((&exit.u - &y.u).amax())
        .max((rec.ell - base.t).abs());
    Ok(GeneratingResiduals { r_a, r_b, t: base.t })
}

/// `dT/ds` against `−∫₀^T H_s` along the unit ray.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FirstVariation {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

fn h_s(family: &Family, h: f64) -> impl Fn(&PhasePoint) -> f64 {
    let mp = family(h);
    let mm = family(-h);
    move |p: &PhasePoint| (mp.eval(p) - mm.eval(p)) / (2.0 * h)
}

pub fn first_variation_check(
    family: &Family,
    x: &Vector,
    y: &Vector,
    seed: Option<&Vector>,
    cfg: &IntegratorConfig,
) -> Result<FirstVariation> {
    let m0 = family(0.0);
    let base = travel_time(m0.as_ref(), x, y, seed, cfg)?;
    let s0 = base.xi0();
    let tp = travel_time(family(S_STEP).as_ref(), x, y, Some(&s0), cfg)?.t;
    let tm = travel_time(family(-S_STEP).as_ref(), x, y, Some(&s0), cfg)?.t;
    let lhs = (tp - tm) / (2.0 * S_STEP);
    let unit = PhasePoint::from_vectors(x.clone(), &s0 / base.t);
    let tr = integrate(m0.as_ref(), &unit, (0.0, base.t), &cfg.clone().jacobian(false))?;
    let hs = h_s(family, S_STEP);
    let rhs = -tr.integrate_along(&hs, QUAD_TOL);
    Ok(FirstVariation {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Both sides of the energy variation identity on `[0, 1]`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyVariation {
    pub lhs: f64,
    pub boundary_term: f64,
    pub integral_term: f64,
    pub residual: f64,
}

pub fn variation_energy_check(family: &Family, curves: &CurveFamily, cfg: &IntegratorConfig) -> Result<EnergyVariation> {
    let cfg = cfg.clone().jacobian(false);
    let m0 = family(0.0);
    let energy = |s: f64| -> Result<f64> {
        let tr = integrate(family(s).as_ref(), &curves(s), (0.0, 1.0), &cfg)?;
        Ok(tr.integrate_along(|p| m0.eval(p), QUAD_TOL))
    };
    let lhs = (energy(S_STEP)? - energy(-S_STEP)?) / (2.0 * S_STEP);

    let ends = |s: f64| -> Result<(Vector, Vector)> {
        let tr = integrate(family(s).as_ref(), &curves(s), (0.0, 1.0), &cfg)?;
        Ok((tr.start().x.clone(), tr.end().x.clone()))
    };
    let (a_p, b_p) = ends(S_STEP)?;
    let (a_m, b_m) = ends(-S_STEP)?;
    let tr0 = integrate(m0.as_ref(), &curves(0.0), (0.0, 1.0), &cfg)?;
    let xs0 = (a_p - a_m) / (2.0 * S_STEP);
    let xs1 = (b_p - b_m) / (2.0 * S_STEP);
    let boundary_term = tr0.end().xi.dot(&xs1) - tr0.start().xi.dot(&xs0);
    let hs = h_s(family, S_STEP);
    let integral_term = -2.0 * tr0.integrate_along(&hs, QUAD_TOL);
    Ok(EnergyVariation {
        lhs,
        boundary_term,
        integral_term,
        residual: (lhs - boundary_term - integral_term).abs(),
    })
}

/// Energy of the connecting curve on `[0, 1]` and its boundary gradients.
#[derive(Clone, Debug, Serialize)]
pub struct SigmaProbe {
    pub r_value: f64,
    pub xi0: Vec<f64>,
    pub eta1: Vec<f64>,
    /// Chart-coordinate gradients of `r` by central differences.
    pub grad_x_r: Vec<f64>,
    pub grad_y_r: Vec<f64>,
    /// `max |H − r|` along the connecting curve.
    pub r_drift: f64,
    /// On `Σ`: distance between `(−d′_x r, d′_y r)` and the entry and exit
    /// covectors of the zero-energy scatter from `(x, ξ₀)`.
    pub scatter_residual: Option<f64>,
}

fn connect(model: &dyn Hamiltonian, x: &Vector, y: &Vector, seed: &Vector, cfg: &IntegratorConfig) -> Result<(Vector, f64)> {
    let (xi0, ..) = shoot(model, x, y, seed, cfg)?;
    let r = model.value(x, &xi0);
    Ok((xi0, r))
}

pub fn sigma_probe(
    model: &dyn Hamiltonian,
    domain: &Domain,
    x: &ChartPoint,
    y: &ChartPoint,
    seed: &Vector,
    cfg: &IntegratorConfig,
) -> Result<SigmaProbe> {
    let xp = x.point(domain)?;
    let yp = y.point(domain)?;
    let (xi0, r) = connect(model, &xp, &yp, seed, cfg)?;
    let p0 = PhasePoint::from_vectors(xp.clone(), xi0.clone());
    let tr = integrate(model, &p0, (0.0, 1.0), &cfg.clone().jacobian(false))?;
    let mut drift: f64 = 0.0;
    for s in tr.steps() {
        for k in 0..=4 {
            drift = drift.max((model.eval(&tr.point_at(s.t0 + s.h * k as f64 / 4.0)) - r).abs());
        }
    }
    let eta1 = tr.end().xi.clone();
    let cx = domain.chart(x.chart)?.clone();
    let cy = domain.chart(y.chart)?.clone();
    let rf = |a: &Vector, b: &Vector| -> Result<f64> { Ok(connect(model, a, b, &xi0, cfg)?.1) };
    let gx = central(|u| rf(&cx.param(u), &yp), &x.u, BOUNDARY_STEP)?;
    let gy = central(|u| rf(&xp, &cy.param(u)), &y.u, BOUNDARY_STEP)?;

    let lvl = 1e-9 * xi0.norm_squared().max(1.0);
    let scatter_residual = if r.abs() <= lvl {
        let rec = scatter_hat(model, domain, &p0, cfg)?;
        let entry = restrict_in_chart(domain, x.chart, &rec.entry)?;
        let exit = restrict_in_chart(domain, y.chart, &rec.exit)?;
        Some(
            (-&gx - &entry.xi_prime)
                .amax()
                .max((&gy - &exit.xi_prime).amax())
                .max((&exit.u - &y.u).amax()),
        )
    } else {
        None
    };
    Ok(SigmaProbe {
        r_value: r,
        xi0: xi0.as_slice().to_vec(),
        eta1: eta1.as_slice().to_vec(),
        grad_x_r: gx.as_slice().to_vec(),
        grad_y_r: gy.as_slice().to_vec(),
        r_drift: drift,
        scatter_residual,
    })
}

/// A pair on `Σ` with a seed for its connecting curve.
#[derive(Clone, Debug)]
pub struct SigmaPair {
    pub x: Vector,
    pub y: Vector,
    pub seed: Vector,
}

/// `dr/ds` against `−ρ∫₀¹ f∘γ` with `ρ` fitted by least squares.
#[derive(Clone, Debug, Serialize)]
pub struct DrCheck {
    pub lhs: Vec<f64>,
    pub integrals: Vec<f64>,
    pub rho: f64,
    /// `max |lhs + ρ·integral|` at the fitted `ρ`.
    pub residual: f64,
    /// Same with `ρ = 1`.
    pub residual_unit_rho: f64,
}

pub fn dr_linearization_check(family: &Family, pairs: &[SigmaPair], cfg: &IntegratorConfig) -> Result<DrCheck> {
    let m0 = family(0.0);
    let mp = family(S_STEP);
    let mm = family(-S_STEP);
    let hs = h_s(family, S_STEP);
    let mut lhs = Vec::new();
    let mut integrals = Vec::new();
    for pair in pairs {
        let (xi0, _) = connect(m0.as_ref(), &pair.x, &pair.y, &pair.seed, cfg)?;
        let (_, rp) = connect(mp.as_ref(), &pair.x, &pair.y, &xi0, cfg)?;
        let (_, rm) = connect(mm.as_ref(), &pair.x, &pair.y, &xi0, cfg)?;
        lhs.push((rp - rm) / (2.0 * S_STEP));
        let tr = integrate(
            m0.as_ref(),
            &PhasePoint::from_vectors(pair.x.clone(), xi0),
            (0.0, 1.0),
            &cfg.clone().jacobian(false),
        )?;
        integrals.push(tr.integrate_along(&hs, QUAD_TOL));
    }
    let ii: f64 = integrals.iter().map(|v| v * v).sum();
    let rho = if ii > 1e-24 {
        -lhs.iter().zip(&integrals).map(|(a, b)| a * b).sum::<f64>() / ii
    } else {
        1.0
    };
    let res = |r: f64| {
        lhs.iter()
            .zip(&integrals)
            .map(|(a, b)| (a + r * b).abs())
            .fold(0.0, f64::max)
    };
    Ok(DrCheck {
        residual: res(rho),
        residual_unit_rho: res(1.0),
        lhs,
        integrals,
        rho,
    })
}
