//! Boundary-to-boundary scattering of bicharacteristics.

use crate::boundary::{
    hit_boundary, restrict, restrict_in_chart, solve_zeta, transversality, Branch, BoundaryCovector, Direction,
    Domain, TOL_TRANSV,
};
use crate::error::{Error, Result};
use crate::flow::{IntegratorConfig, Trajectory};
use crate::hamiltonians::{Hamiltonian, PhasePoint};

/// Entry and exit data of one maximal bicharacteristic.
#[derive(Clone, Debug)]
pub struct ScatterRecord {
    pub entry_bc: BoundaryCovector,
    pub entry: PhasePoint,
    pub exit_bc: BoundaryCovector,
    pub exit: PhasePoint,
    /// Signed flow parameter from entry to exit; negative for outgoing entries.
    pub ell: f64,
    pub energy: f64,
    pub transversal_entry: bool,
    pub transversal_exit: bool,
}

impl ScatterRecord {
    /// `|H(exit) − H(entry)|`.
    pub fn energy_defect(&self, model: &dyn Hamiltonian) -> f64 {
        (model.eval(&self.exit) - self.energy).abs()
    }
}

fn is_transversal(model: &dyn Hamiltonian, domain: &Domain, p: &PhasePoint) -> bool {
    let t = transversality(model, domain, p);
    t.abs() > TOL_TRANSV * domain.grad_rho(&p.x).norm() * model.grad_xi(&p.x, &p.xi).norm()
}

/// `Ŝ` together with the traced bicharacteristic.
pub fn scatter_trace(
    model: &dyn Hamiltonian,
    domain: &Domain,
    p: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<(ScatterRecord, Trajectory)> {
    let tv = transversality(model, domain, p);
    if !is_transversal(model, domain, p) {
        return Err(Error::TangentialHit(tv));
    }
    let direction = if tv > 0.0 {
        Direction::Forward
    } else {
        Direction::Backward
    };
    let hit = hit_boundary(model, domain, p, direction, cfg).map_err(|e| match e {
        Error::NoHitWithinMaxTime | Error::MaxTimeExceeded(_) => Error::Trapped,
        other => other,
    })?;
    let entry_bc = restrict(domain, p)?;
    let exit_bc = restrict(domain, &hit.point)?;
    let rec = ScatterRecord {
        entry_bc,
        exit_bc,
        transversal_entry: true,
        transversal_exit: is_transversal(model, domain, &hit.point),
        entry: p.clone(),
        exit: hit.point,
        ell: hit.t,
        energy: model.eval(p),
    };
    Ok((rec, hit.trajectory))
}

/// `Ŝ(x, ξ)` for a boundary covector; forward if incoming, backward if outgoing.
pub fn scatter_hat(
    model: &dyn Hamiltonian,
    domain: &Domain,
    p: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<ScatterRecord> {
    scatter_trace(model, domain, p, cfg).map(|r| r.0)
}

/// `S = ι*∘Ŝ∘ζ` on the energy level `E`.
pub fn scatter(
    model: &dyn Hamiltonian,
    domain: &Domain,
    bc: &BoundaryCovector,
    energy: f64,
    branch: Branch,
    cfg: &IntegratorConfig,
) -> Result<ScatterRecord> {
    let p = solve_zeta(model, domain, bc, energy, branch)?;
    let mut rec = scatter_hat(model, domain, &p, cfg)?;
    rec.entry_bc = bc.clone();
    Ok(rec)
}

/// `S_λ(x, ξ′) = M_λ S(x, ξ′/λ)` and `ℓ_λ = ℓ(x, ξ′/λ)/λ`, from the unit level.
pub fn scatter_lambda(
    model: &dyn Hamiltonian,
    domain: &Domain,
    bc: &BoundaryCovector,
    lambda: f64,
    cfg: &IntegratorConfig,
) -> Result<(BoundaryCovector, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let rec = scatter(model, domain, &bc.scaled(1.0 / lambda), 0.5, Branch::Incoming, cfg)?;
    Ok((rec.exit_bc.scaled(lambda), rec.ell / lambda))
}

/// Difference between [`scatter_lambda`] and a direct scatter at `E = λ²/2`,
/// as `(exit covector residual, travel time residual)`.
pub fn lambda_consistency(
    model: &dyn Hamiltonian,
    domain: &Domain,
    bc: &BoundaryCovector,
    lambda: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let (exit, ell) = scatter_lambda(model, domain, bc, lambda, cfg)?;
    let direct = scatter(model, domain, bc, 0.5 * lambda * lambda, Branch::Incoming, cfg)?;
    let exit_direct = restrict_in_chart(domain, exit.chart, &direct.exit)?;
    Ok((exit.dist(&exit_direct), (ell - direct.ell).abs()))
}

/// `S₀` on the zero level; `ell` holds the parameter `ℓ₊` (or `ℓ₋ < 0` for
/// outgoing data).
pub fn scatter_zero(
    model: &dyn Hamiltonian,
    domain: &Domain,
    bc: &BoundaryCovector,
    branch: Branch,
    cfg: &IntegratorConfig,
) -> Result<ScatterRecord> {
    scatter(model, domain, bc, 0.0, branch, cfg)
}

/// Scatter the exit of `rec` backwards and report the distance to its entry.
pub fn inverse_residual(
    model: &dyn Hamiltonian,
    domain: &Domain,
    rec: &ScatterRecord,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let back = scatter_hat(model, domain, &rec.exit, cfg)?;
    let entry = restrict_in_chart(domain, rec.entry_bc.chart, &back.exit)?;
    Ok(entry
        .dist(&rec.entry_bc)
        .max(back.exit.dist(&rec.entry))
        .max((back.ell + rec.ell).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::shapes::{disk, half_space, slab};
    use crate::hamiltonians::builtin::{euclidean, minkowski};

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn disk_diameter() {
        let h = euclidean(2);
        let d = disk(1.0);
        let rec = scatter_hat(&h, &d, &PhasePoint::new(&[-1.0, 0.0], &[1.0, 0.0]), &cfg()).unwrap();
        assert!((rec.ell - 2.0).abs() < 1e-10);
        assert!(rec.exit.dist(&PhasePoint::new(&[1.0, 0.0], &[1.0, 0.0])) < 1e-10);
        assert!(rec.transversal_exit);
    }

    #[test]
    fn disk_sixty_degree_chord() {
        let h = euclidean(2);
        let d = disk(1.0);
        let a = 60f64.to_radians();
        let p = PhasePoint::new(&[-1.0, 0.0], &[a.cos(), a.sin()]);
        let rec = scatter_hat(&h, &d, &p, &cfg()).unwrap();
        assert!((rec.ell - 1.0).abs() < 1e-10);
        assert!(rec.energy_defect(&h) < 1e-12);
    }

    #[test]
    fn outgoing_entry_runs_backward() {
        let h = euclidean(2);
        let d = disk(1.0);
        let rec = scatter_hat(&h, &d, &PhasePoint::new(&[1.0, 0.0], &[1.0, 0.0]), &cfg()).unwrap();
        assert!((rec.ell + 2.0).abs() < 1e-10);
        assert!((rec.exit.x[0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn slab_transits() {
        let h = euclidean(2);
        let s = slab(2, 1, 0.0, 1.0);
        let rec = scatter(&h, &s, &BoundaryCovector::new(0, &[0.0], &[0.0]), 0.5, Branch::Incoming, &cfg()).unwrap();
        assert_eq!(rec.exit_bc.chart, 1);
        assert!(rec.exit_bc.u[0].abs() < 1e-12 && (rec.ell - 1.0).abs() < 1e-12);
        let rec = scatter(&h, &s, &BoundaryCovector::new(0, &[0.0], &[0.6]), 0.5, Branch::Incoming, &cfg()).unwrap();
        assert!((rec.exit_bc.u[0] - 0.75).abs() < 1e-12);
        assert!((rec.ell - 1.25).abs() < 1e-12);
    }

    #[test]
    fn lambda_routes_agree() {
        let h = euclidean(2);
        let s = slab(2, 1, 0.0, 1.0);
        let bc = BoundaryCovector::new(0, &[0.0], &[1.2]);
        let (exit, ell) = scatter_lambda(&h, &s, &bc, 2.0, &cfg()).unwrap();
        assert!((ell - 0.625).abs() < 1e-12);
        assert!((exit.xi_prime[0] - 1.2).abs() < 1e-12);
        let (de, dl) = lambda_consistency(&h, &s, &bc, 2.0, &cfg()).unwrap();
        assert!(de < 1e-10 && dl < 1e-10);
        let one = scatter_lambda(&h, &s, &bc.scaled(0.5), 1.0, &cfg()).unwrap();
        let unit = scatter(&h, &s, &bc.scaled(0.5), 0.5, Branch::Incoming, &cfg()).unwrap();
        assert!((one.1 - unit.ell).abs() < 1e-14);
        assert!(matches!(
            scatter_lambda(&h, &s, &bc, 0.0, &cfg()),
            Err(Error::NonPositiveLambda(_))
        ));
    }

    #[test]
    fn zero_energy_null_line() {
        let h = minkowski(2);
        let s = slab(2, 1, 0.0, 1.0);
        let bc = BoundaryCovector::new(0, &[0.0], &[-1.0]);
        let rec = scatter_zero(&h, &s, &bc, Branch::Incoming, &cfg()).unwrap();
        assert!((rec.ell - 1.0).abs() < 1e-12);
        assert!((rec.exit.x[0] - 1.0).abs() < 1e-12);
        let rec2 = scatter_zero(&h, &s, &bc.scaled(2.0), Branch::Incoming, &cfg()).unwrap();
        assert!((rec2.ell - 0.5).abs() < 1e-12);
        assert!((rec2.exit_bc.xi_prime[0] - 2.0 * rec.exit_bc.xi_prime[0]).abs() < 1e-12);
    }

    #[test]
    fn grazing_start_is_rejected() {
        let h = euclidean(2);
        let r = scatter_hat(&h, &half_space(2), &PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]), &cfg());
        assert!(matches!(r, Err(Error::TangentialHit(_))));
        let t = scatter_hat(&h, &half_space(2), &PhasePoint::new(&[0.0, 0.0], &[0.0, 1.0]), &cfg());
        assert!(matches!(t, Err(Error::Trapped)));
    }

    #[test]
    fn backward_scatter_inverts() {
        let h = euclidean(2);
        let d = disk(1.0);
        let rec = scatter(&h, &d, &BoundaryCovector::new(1, &[3.0], &[0.3]), 0.5, Branch::Incoming, &cfg()).unwrap();
        assert!(inverse_residual(&h, &d, &rec, &cfg()).unwrap() < 1e-9);
    }
}
