//! Hamiltonian flows `Φ^t` with dense output and variational equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{Hamiltonian, PhasePoint, Scaled};
use crate::linalg::{symplectic_residual, Matrix, Vector};
use crate::ode::{self, Control, Step, Tolerances};
use crate::quad::adaptive_simpson;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_time: f64,
    pub with_jacobian: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_time: 1e3,
            with_jacobian: false,
        }
    }
}

impl IntegratorConfig {
    pub fn jacobian(mut self, on: bool) -> Self {
        self.with_jacobian = on;
        self
    }

    pub fn tight(mut self) -> Self {
        self.rel_tol = 1e-12;
        self.abs_tol = 1e-14;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0 && self.max_time > 0.0) {
            return Err(Error::ConfigParse("integrator tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.rel_tol,
            atol: self.abs_tol,
            max_step: self.max_step,
            ..Tolerances::default()
        }
    }
}

/// Right-hand side of Hamilton's equations on `(x, ξ[, M])`, with `M`
/// stored column-major after the base state.
pub fn hamilton_rhs<'a>(
    model: &'a dyn Hamiltonian,
    with_jacobian: bool,
) -> impl Fn(f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    let n = model.dim();
    move |_t, y, dy| {
        let x = Vector::from_column_slice(&y[..n]);
        let xi = Vector::from_column_slice(&y[n..2 * n]);
        let gxi = model.grad_xi(&x, &xi);
        let gx = model.grad_x(&x, &xi);
        for i in 0..n {
            dy[i] = gxi[i];
            dy[n + i] = -gx[i];
        }
        if with_jacobian {
            let m = 2 * n;
            let hess = model.hessian(&x, &xi);
            // A = −J·Hess: top rows are the ξ-rows of Hess, bottom rows minus the x-rows
            let mut a = Matrix::zeros(m, m);
            for r in 0..n {
                for c in 0..m {
                    a[(r, c)] = hess[(n + r, c)];
                    a[(n + r, c)] = -hess[(r, c)];
                }
            }
            let mm = Matrix::from_column_slice(m, m, &y[m..m + m * m]);
            let dm = a * mm;
            dy[m..m + m * m].copy_from_slice(dm.as_slice());
        }
        Ok(())
    }
}

/// Initial state vector for [`hamilton_rhs`].
pub fn initial_state(p: &PhasePoint, jac: Option<&Matrix>) -> Vec<f64> {
    let mut y: Vec<f64> = p.state().iter().copied().collect();
    if let Some(m) = jac {
        y.extend_from_slice(m.as_slice());
    }
    y
}

/// A densely sampled bicharacteristic.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n: usize,
    pub samples: Vec<(f64, PhasePoint)>,
    pub jacobians: Option<Vec<Matrix>>,
    pub energy0: f64,
    pub tol_report: f64,
    steps: Vec<Step>,
}

impl Trajectory {
    pub(crate) fn from_steps(
        n: usize,
        t0: f64,
        y0: &[f64],
        steps: Vec<Step>,
        with_jac: bool,
        energy0: f64,
    ) -> Self {
        let m = 2 * n;
        let split = |y: &[f64]| -> (PhasePoint, Option<Matrix>) {
            let p = PhasePoint::from_state(y, n);
            let j = with_jac.then(|| Matrix::from_column_slice(m, m, &y[m..m + m * m]));
            (p, j)
        };
        let (p0, j0) = split(y0);
        let mut samples = vec![(t0, p0)];
        let mut jacs = j0.map(|j| vec![j]);
        let mut tol_report: f64 = 0.0;
        for s in &steps {
            let (p, j) = split(&s.y1);
            samples.push((s.t1(), p));
            if let (Some(v), Some(j)) = (jacs.as_mut(), j) {
                v.push(j);
            }
            tol_report = tol_report.max(s.err);
        }
        Trajectory {
            n,
            samples,
            jacobians: jacs,
            energy0,
            tol_report,
            steps,
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn t_start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().unwrap().0
    }

    pub fn start(&self) -> &PhasePoint {
        &self.samples[0].1
    }

    pub fn end(&self) -> &PhasePoint {
        &self.samples.last().unwrap().1
    }

    pub fn end_jacobian(&self) -> Option<&Matrix> {
        self.jacobians.as_ref().map(|v| v.last().unwrap())
    }

    fn state_at(&self, t: f64) -> Vec<f64> {
        if self.steps.is_empty() {
            let mut y: Vec<f64> = self.samples[0].1.state().iter().copied().collect();
            if let Some(j) = &self.jacobians {
                y.extend_from_slice(j[0].as_slice());
            }
            return y;
        }
        let fwd = self.steps[0].h > 0.0;
        // index of the first step whose end passes t
        let idx = self
            .steps
            .partition_point(|s| if fwd { s.t1() < t } else { s.t1() > t })
            .min(self.steps.len() - 1);
        self.steps[idx].eval(t)
    }

    /// Dense-output phase point at parameter `t`.
    pub fn point_at(&self, t: f64) -> PhasePoint {
        PhasePoint::from_state(&self.state_at(t), self.n)
    }

    /// Dense-output variational matrix at `t`, if co-integrated.
    pub fn jacobian_at(&self, t: f64) -> Option<Matrix> {
        self.jacobians.as_ref()?;
        let m = 2 * self.n;
        let y = self.state_at(t);
        Some(Matrix::from_column_slice(m, m, &y[m..m + m * m]))
    }

    /// `max |H − H(0)| / max(1, |H(0)|)` over the samples.
    pub fn energy_drift(&self, model: &dyn Hamiltonian) -> f64 {
        let s = self.energy0.abs().max(1.0);
        self.samples
            .iter()
            .map(|(_, p)| (model.eval(p) - self.energy0).abs() / s)
            .fold(0.0, f64::max)
    }

    /// Worst `‖MᵀJM − J‖∞` over the stored Jacobians.
    pub fn symplectic_drift(&self) -> Option<f64> {
        self.jacobians
            .as_ref()
            .map(|v| v.iter().map(symplectic_residual).fold(0.0, f64::max))
    }

    /// `∫ f(γ(t)) dt` over the whole trajectory (signed by orientation),
    /// using adaptive Simpson on the dense output of each step.
    pub fn integrate_along<F: Fn(&PhasePoint) -> f64>(&self, f: F, tol: f64) -> f64 {
        let total = (self.t_end() - self.t_start()).abs().max(1e-300);
        self.steps
            .iter()
            .map(|s| {
                let local = tol * s.h.abs() / total;
                let mut buf = vec![0.0; s.dim()];
                adaptive_simpson(
                    |t| {
                        s.eval_into(t, &mut buf);
                        f(&PhasePoint::from_state(&buf, self.n))
                    },
                    s.t0,
                    s.t1(),
                    local,
                )
            })
            .sum()
    }
}

/// Solve Hamilton's equations over `t_span` (either orientation).
pub fn integrate(
    model: &dyn Hamiltonian,
    p0: &PhasePoint,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let (t0, t1) = t_span;
    if (t1 - t0).abs() > cfg.max_time {
        return Err(Error::MaxTimeExceeded(cfg.max_time));
    }
    let n = model.dim();
    let id = cfg.with_jacobian.then(|| Matrix::identity(2 * n, 2 * n));
    let y0 = initial_state(p0, id.as_ref());
    let rhs = hamilton_rhs(model, cfg.with_jacobian);
    let mut steps = Vec::new();
    ode::integrate(&rhs, t0, &y0, t1, &cfg.tolerances(), |s| {
        steps.push(s.clone());
        Ok(Control::Continue)
    })?;
    Ok(Trajectory::from_steps(
        n,
        t0,
        &y0,
        steps,
        cfg.with_jacobian,
        model.eval(p0),
    ))
}

/// `Φ^t(p0)`.
pub fn flow_map(model: &dyn Hamiltonian, p0: &PhasePoint, t: f64, cfg: &IntegratorConfig) -> Result<PhasePoint> {
    let cfg = IntegratorConfig {
        with_jacobian: false,
        ..cfg.clone()
    };
    Ok(integrate(model, p0, (0.0, t), &cfg)?.end().clone())
}

/// `Φ^t(p0)` together with `dΦ^t(p0)`.
pub fn flow_map_with_jacobian(
    model: &dyn Hamiltonian,
    p0: &PhasePoint,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(PhasePoint, Matrix)> {
    let cfg = cfg.clone().jacobian(true);
    let tr = integrate(model, p0, (0.0, t), &cfg)?;
    Ok((tr.end().clone(), tr.end_jacobian().unwrap().clone()))
}

/// `‖Φ^t(M_λ p0) − M_λ Φ^{λt}(p0)‖∞`.
pub fn rescale_check(
    model: &dyn Hamiltonian,
    p0: &PhasePoint,
    lambda: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let lhs = flow_map(model, &p0.dilate(lambda)?, t, cfg)?;
    let rhs = flow_map(model, p0, lambda * t, cfg)?.dilate(lambda)?;
    Ok(lhs.dist(&rhs))
}

/// Output of [`reparametrize_mu`].
#[derive(Clone, Debug)]
pub struct MuReparametrization {
    /// The `μH` trajectory from the same initial point.
    pub breve: Trajectory,
    /// `(s, s̆(s))` on the requested grid.
    pub map: Vec<(f64, f64)>,
    /// `max_s ‖γ̆(s̆(s)) − γ(s)‖∞`.
    pub coincidence: f64,
}

/// Compare the flow of `μH` with the flow of `H` on the zero level through
/// the time change `ds̆/ds = 1/μ`.
pub fn reparametrize_mu<M>(
    model: &dyn Hamiltonian,
    mu: M,
    p0: &PhasePoint,
    s_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<MuReparametrization>
where
    M: Fn(&Vector, &Vector) -> f64 + Send + Sync + Clone + 'static,
{
    let n = model.dim();
    let h0 = model.eval(p0);
    let tol_level = 1e-9 * p0.xi.norm_squared().max(1.0);
    if h0.abs() > tol_level {
        return Err(Error::LevelSetViolation(h0.abs()));
    }
    let s_max = s_grid.iter().copied().fold(0.0, f64::max);
    let base = hamilton_rhs(model, false);
    let mu_c = mu.clone();
    let rhs = move |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        base(t, &y[..2 * n], &mut dy[..2 * n])?;
        let m = mu_c(
            &Vector::from_column_slice(&y[..n]),
            &Vector::from_column_slice(&y[n..2 * n]),
        );
        if !(m > 0.0) {
            return Err(Error::NonPositiveMu(m));
        }
        dy[2 * n] = 1.0 / m;
        Ok(())
    };
    let mut y0 = initial_state(p0, None);
    y0.push(0.0);
    let mut steps = Vec::new();
    ode::integrate(&rhs, 0.0, &y0, s_max, &cfg.tolerances(), |s| {
        steps.push(s.clone());
        Ok(Control::Continue)
    })?;
    let state_at = |s: f64| -> Vec<f64> {
        if steps.is_empty() {
            return y0.clone();
        }
        let idx = steps.partition_point(|st| st.t1() < s).min(steps.len() - 1);
        steps[idx].eval(s)
    };
    let map: Vec<(f64, f64)> = s_grid.iter().map(|&s| (s, state_at(s)[2 * n])).collect();
    let sb_max = map.iter().map(|m| m.1).fold(0.0, f64::max);

    let scaled = Scaled::new(model, std::sync::Arc::new(mu));
    let breve = integrate(&scaled, p0, (0.0, sb_max), cfg)?;
    let mut coincidence: f64 = 0.0;
    for &(s, sb) in &map {
        let a = PhasePoint::from_state(&state_at(s)[..2 * n], n);
        let b = breve.point_at(sb);
        coincidence = coincidence.max(a.dist(&b));
    }
    Ok(MuReparametrization {
        breve,
        map,
        coincidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::builtin::{conformal_linear, euclidean, lens, minkowski};
    use crate::linalg::symplectic_residual;

    #[test]
    fn euclidean_closed_form() {
        let h = euclidean(2);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]);
        let q = flow_map(&h, &p, 2.0, &IntegratorConfig::default()).unwrap();
        assert!((q.x[0] - 2.0).abs() < 1e-12 && q.x[1].abs() < 1e-12);
        assert!((q.xi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_span() {
        let h = euclidean(2);
        let p = PhasePoint::new(&[0.3, 0.1], &[1.0, 0.5]);
        let tr = integrate(&h, &p, (1.0, 1.0), &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.end(), &p);
    }

    #[test]
    fn max_time_is_enforced() {
        let h = euclidean(2);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]);
        let cfg = IntegratorConfig {
            max_time: 1.0,
            ..Default::default()
        };
        assert!(matches!(integrate(&h, &p, (0.0, 2.0), &cfg), Err(Error::MaxTimeExceeded(_))));
    }

    #[test]
    fn group_law_and_reversal() {
        let h = lens(2, 0.4);
        let cfg = IntegratorConfig::default();
        let p = PhasePoint::new(&[-0.8, 0.2], &[1.0, 0.1]);
        let a = flow_map(&h, &flow_map(&h, &p, 0.7, &cfg).unwrap(), 0.5, &cfg).unwrap();
        let b = flow_map(&h, &p, 1.2, &cfg).unwrap();
        assert!(a.dist(&b) < 1e-9);
        let back = flow_map(&h, &b, -1.2, &cfg).unwrap();
        assert!(back.dist(&p) < 1e-9);
    }

    #[test]
    fn energy_and_symplectic_drift() {
        let h = conformal_linear(2);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]);
        let tr = integrate(&h, &p, (0.0, 1.0), &IntegratorConfig::default().jacobian(true)).unwrap();
        assert!(tr.energy_drift(&h) < 1e-9);
        assert!(tr.symplectic_drift().unwrap() < 1e-8);
        assert!(symplectic_residual(tr.end_jacobian().unwrap()) < 1e-8);
    }

    #[test]
    fn dense_output_between_steps() {
        let h = euclidean(1);
        let p = PhasePoint::new(&[0.0], &[2.0]);
        let tr = integrate(&h, &p, (0.0, 3.0), &IntegratorConfig::default()).unwrap();
        let q = tr.point_at(1.37);
        assert!((q.x[0] - 2.74).abs() < 1e-12);
    }

    #[test]
    fn rescaling_law() {
        let cfg = IntegratorConfig::default();
        let h = euclidean(2);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]);
        assert!(rescale_check(&h, &p, 2.0, 1.0, &cfg).unwrap() < 1e-10);
        let c = conformal_linear(2);
        let q = PhasePoint::new(&[0.0, 0.0], &[0.0, 1.0]);
        assert!(rescale_check(&c, &q, 3.0, 0.5, &cfg).unwrap() < 1e-9);
    }

    #[test]
    fn constant_mu_halves_parameter() {
        let h = minkowski(2);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 1.0]);
        let r = reparametrize_mu(&h, |_: &Vector, _: &Vector| 2.0, &p, &[0.0, 0.5, 1.0, 2.0], &IntegratorConfig::default())
            .unwrap();
        for (s, sb) in &r.map {
            assert!((sb - s / 2.0).abs() < 1e-12);
        }
        assert!(r.coincidence < 1e-9);
    }

    #[test]
    fn variable_mu_on_null_ray() {
        let h = minkowski(2);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 1.0]);
        let grid: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
        let r = reparametrize_mu(&h, |x: &Vector, _: &Vector| 1.0 + 0.1 * x[1].sin(), &p, &grid, &IntegratorConfig::default())
            .unwrap();
        assert!(r.coincidence < 1e-6);
    }

    #[test]
    fn off_level_start_is_rejected() {
        let h = minkowski(2);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 2.0]);
        let r = reparametrize_mu(&h, |_: &Vector, _: &Vector| 1.0, &p, &[1.0], &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::LevelSetViolation(_))));
    }
}
