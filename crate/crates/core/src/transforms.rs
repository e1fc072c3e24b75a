//! Ray transforms of phase-space functions along unit and null
//! bicharacteristics, and the gauge potential of a transform-free integrand.

use std::sync::Arc;

use crate::boundary::{hit_boundary, Direction, Domain};
use crate::error::{Error, Result};
use crate::flow::{flow_map, IntegratorConfig};
use crate::hamiltonians::{Hamiltonian, PhasePoint, PhaseScalar, Scaled};
use crate::linalg::{scaled_step, Vector};
use crate::scattering::scatter_trace;

const QUAD_TOL: f64 = 1e-11;
const FLOW_STEP: f64 = 1e-4;

/// A function on phase space with declared fiber homogeneity.
#[derive(Clone)]
pub struct PhaseFunction {
    pub label: String,
    pub degree: i32,
    eval: PhaseScalar,
    flow_derivative: Option<PhaseScalar>,
}

impl PhaseFunction {
    pub fn new(label: &str, degree: i32, eval: PhaseScalar) -> Self {
        PhaseFunction {
            label: label.into(),
            degree,
            eval,
            flow_derivative: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        PhaseFunction::new("const", 0, Arc::new(move |_, _| c))
    }

    /// Attach an analytic `X_Hφ` used by [`flow_derivative`].
    pub fn with_flow_derivative(mut self, d: PhaseScalar) -> Self {
        self.flow_derivative = Some(d);
        self
    }

    pub fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        (self.eval)(x, xi)
    }

    pub fn eval(&self, p: &PhasePoint) -> f64 {
        (self.eval)(&p.x, &p.xi)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &PhaseFunction, b: f64) -> PhaseFunction {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        PhaseFunction::new(
            &format!("{a}*{}+{b}*{}", self.label, other.label),
            self.degree,
            Arc::new(move |x, xi| a * f(x, xi) + b * g(x, xi)),
        )
    }

    /// `{H, φ}` as a phase function, from five-point phase-space gradients of
    /// `φ` and the model derivatives.
    pub fn hamilton_derivative<H: Hamiltonian + Clone + 'static>(model: H, phi: &PhaseFunction) -> PhaseFunction {
        let f = phi.eval.clone();
        PhaseFunction::new(
            &format!("X_H({})", phi.label),
            phi.degree + 1,
            Arc::new(move |x: &Vector, xi: &Vector| {
                let n = x.len();
                let mut acc = 0.0;
                let hxi = model.grad_xi(x, xi);
                let hx = model.grad_x(x, xi);
                for k in 0..n {
                    let gx = five_point(|d| {
                        let mut y = x.clone();
                        y[k] += d;
                        f(&y, xi)
                    }, scaled_step(1e-3, x[k]));
                    let gxi = five_point(|d| {
                        let mut e = xi.clone();
                        e[k] += d;
                        f(x, &e)
                    }, scaled_step(1e-3, xi[k]));
                    acc += gx * hxi[k] - gxi * hx[k];
                }
                acc
            }),
        )
    }
}

fn five_point<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

/// `X_Hφ(p) = d/dt φ(Φ^t p)` at `t = 0`; analytic if attached, else a
/// four-point central difference along the flow.
pub fn flow_derivative(model: &dyn Hamiltonian, phi: &PhaseFunction, p: &PhasePoint, cfg: &IntegratorConfig) -> Result<f64> {
    if let Some(d) = &phi.flow_derivative {
        return Ok(d(&p.x, &p.xi));
    }
    let at = |t: f64| -> Result<f64> { Ok(phi.eval(&flow_map(model, p, t, cfg)?)) };
    let h = FLOW_STEP;
    Ok((-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h))
}

fn check_level(model: &dyn Hamiltonian, p: &PhasePoint, target: f64) -> Result<()> {
    let h = model.eval(p);
    if (h - target).abs() > 1e-9 * p.xi.norm_squared().max(1.0) {
        return Err(Error::LevelSetViolation((h - target).abs()));
    }
    Ok(())
}

/// Integrals of several functions along the maximal curve through `entry`,
/// sharing one trajectory; also returns the travel time.
pub fn ray_integrals(
    model: &dyn Hamiltonian,
    domain: &Domain,
    fs: &[&PhaseFunction],
    entry: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, f64)> {
    let (rec, tr) = scatter_trace(model, domain, entry, cfg)?;
    if rec.ell < 0.0 {
        return Err(Error::InvalidPoint("entry covector is outgoing".into()));
    }
    let tol = QUAD_TOL * rec.ell.max(1.0);
    Ok((fs.iter().map(|f| tr.integrate_along(|p| f.eval(p), tol)).collect(), rec.ell))
}

/// `Xf(entry) = ∫₀^ℓ f(Φ^t(entry)) dt` over a unit curve.
pub fn xray(model: &dyn Hamiltonian, domain: &Domain, f: &PhaseFunction, entry: &PhasePoint, cfg: &IntegratorConfig) -> Result<f64> {
    check_level(model, entry, 0.5)?;
    Ok(ray_integrals(model, domain, &[f], entry, cfg)?.0[0])
}

/// `Lf(entry)` over a null curve, in the flow parameter of `model`.
pub fn lightray(model: &dyn Hamiltonian, domain: &Domain, f: &PhaseFunction, entry: &PhasePoint, cfg: &IntegratorConfig) -> Result<f64> {
    check_level(model, entry, 0.0)?;
    Ok(ray_integrals(model, domain, &[f], entry, cfg)?.0[0])
}

/// `φ(p) = ∫_{−ℓ₋}^0 f(Φ^s p) ds` for an interior point.
pub fn gauge_potential(model: &dyn Hamiltonian, domain: &Domain, f: &PhaseFunction, p: &PhasePoint, cfg: &IntegratorConfig) -> Result<f64> {
    let hit = hit_boundary(model, domain, p, Direction::Backward, cfg).map_err(|e| match e {
        Error::NoHitWithinMaxTime => Error::Trapped,
        other => other,
    })?;
    let tol = QUAD_TOL * hit.t.abs().max(1.0);
    Ok(-hit.trajectory.integrate_along(|q| f.eval(q), tol))
}

/// `L_{μH} f` and `L_H(f/μ)` on the same null entry; they agree because the
/// `μH` flow traces the same null curve with `ds̆ = ds/μ`.
pub fn lightray_reparam_check(
    model: Arc<dyn Hamiltonian>,
    mu: PhaseScalar,
    domain: &Domain,
    f: &PhaseFunction,
    entry: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let scaled = Scaled::new(model.clone(), mu.clone());
    let lhs = lightray(&scaled, domain, f, entry, cfg)?;
    let g = f.eval.clone();
    let over_mu = PhaseFunction::new("f/mu", f.degree, Arc::new(move |x, xi| g(x, xi) / mu(x, xi)));
    let rhs = lightray(model.as_ref(), domain, &over_mu, entry, cfg)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::shapes::{disk, slab};
    use crate::hamiltonians::builtin::{euclidean, lens, minkowski};

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn disk_bump() -> PhaseFunction {
        PhaseFunction::new("phi", 1, Arc::new(|x, xi| (1.0 - x.norm_squared()) * xi[0])).with_flow_derivative(Arc::new(
            |x: &Vector, xi: &Vector| -2.0 * xi[0] * x.dot(xi),
        ))
    }

    #[test]
    fn constant_integrand_gives_travel_time() {
        let e = PhasePoint::new(&[-1.0, 0.0], &[1.0, 0.0]);
        let v = xray(&euclidean(2), &disk(1.0), &PhaseFunction::constant(1.0), &e, &cfg()).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn parabola_along_diameter() {
        let f = PhaseFunction::new("1-|x|^2", 0, Arc::new(|x, _| 1.0 - x.norm_squared()));
        let e = PhasePoint::new(&[-1.0, 0.0], &[1.0, 0.0]);
        let v = xray(&euclidean(2), &disk(1.0), &f, &e, &cfg()).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn off_level_entry_is_rejected() {
        let e = PhasePoint::new(&[-1.0, 0.0], &[2.0, 0.0]);
        let r = xray(&euclidean(2), &disk(1.0), &PhaseFunction::constant(1.0), &e, &cfg());
        assert!(matches!(r, Err(Error::LevelSetViolation(_))));
    }

    #[test]
    fn flow_derivative_routes() {
        let h = euclidean(2);
        let p = PhasePoint::new(&[0.2, -0.3], &[0.7, 0.4]);
        let phi = PhaseFunction::new("x1 xi1", 1, Arc::new(|x, xi| x[0] * xi[0]));
        let d = flow_derivative(&h, &phi, &p, &cfg()).unwrap();
        assert!((d - 0.49).abs() < 1e-9);
        let hp = PhaseFunction::new("H", 2, Arc::new(|_, xi: &Vector| 0.5 * xi.norm_squared()));
        assert!(flow_derivative(&h, &hp, &p, &cfg()).unwrap().abs() < 1e-9);
        let bracket = PhaseFunction::hamilton_derivative(euclidean(2), &phi);
        assert!((bracket.eval(&p) - 0.49).abs() < 1e-10);
    }

    #[test]
    fn exact_integrand_has_zero_transform() {
        let h = euclidean(2);
        let phi = disk_bump();
        let f = PhaseFunction::new("X_H phi", 2, Arc::new(|x: &Vector, xi: &Vector| -2.0 * xi[0] * x.dot(xi)));
        for k in 0..5 {
            let th = 2.0 + 0.4 * k as f64;
            let a = th + std::f64::consts::PI + 0.3;
            let e = PhasePoint::new(&[th.cos(), th.sin()], &[a.cos(), a.sin()]);
            assert!(xray(&h, &disk(1.0), &f, &e, &cfg()).unwrap().abs() < 1e-9);
        }
        let p = PhasePoint::new(&[0.1, 0.2], &[0.6, 0.8]);
        let g = gauge_potential(&h, &disk(1.0), &f, &p, &cfg()).unwrap();
        assert!((g - phi.eval(&p)).abs() < 1e-9);
    }

    #[test]
    fn potential_of_zero_is_zero() {
        let p = PhasePoint::new(&[0.1, 0.2], &[0.6, 0.8]);
        let g = gauge_potential(&lens(2, 0.4), &disk(1.0), &PhaseFunction::constant(0.0), &p, &cfg()).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn null_ray_kernel_and_reparametrization() {
        let h = minkowski(2);
        let s = slab(2, 1, 0.0, 1.0);
        let phi = PhaseFunction::new("phi", 1, Arc::new(|x: &Vector, xi: &Vector| x[1] * (1.0 - x[1]) * xi[0]));
        let f = PhaseFunction::hamilton_derivative(minkowski(2), &phi);
        let e = PhasePoint::new(&[0.0, 0.0], &[-1.0, 1.0]);
        assert!(lightray(&h, &s, &f, &e, &cfg()).unwrap().abs() < 1e-10);
        let one = lightray(&h, &s, &PhaseFunction::constant(1.0), &e, &cfg()).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        let (a, b) = lightray_reparam_check(
            Arc::new(minkowski(2)),
            Arc::new(|x: &Vector, _: &Vector| 1.0 + 0.3 * x[1].sin()),
            &s,
            &PhaseFunction::new("x1", 0, Arc::new(|x: &Vector, _| 1.0 + x[0])),
            &e,
            &cfg(),
        )
        .unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}
