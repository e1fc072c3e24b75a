//! Zero-energy map between Minkowski space and a conformal rescaling whose
//! factor is constant along null lines; the factor is read off from travel
//! parameters.

use std::sync::Arc;

use hamlens::boundary::shapes::slab;
use hamlens::canonical::kappa_zero_energy;
use hamlens::hamiltonians::builtin::minkowski;
use hamlens::hamiltonians::Scaled;
use hamlens::{IntegratorConfig, Model, PhasePoint, Vector};

fn main() -> hamlens::Result<()> {
    let h: Model = Arc::new(minkowski(2));
    let mu0 = |x: &Vector, xi: &Vector| 1.0 + 0.3 * (x[0] + x[1] * xi[0] / xi[1]).sin();
    let ht: Model = Arc::new(Scaled::new(h.clone(), Arc::new(mu0)));
    let z = kappa_zero_energy(h, ht, Arc::new(slab(2, 1, 0.0, 1.0)), 0, &IntegratorConfig::default().tight())?;

    for p in [PhasePoint::new(&[0.3, 0.4], &[-1.2, 1.2]), PhasePoint::new(&[-0.5, 0.7], &[0.8, 0.8])] {
        println!(
            "mu {:.12} (planted {:.12})  tangential symplectic {:.1e}  flow invariance {:.1e}",
            z.mu.eval(&p),
            mu0(&p.x, &p.xi),
            z.tangential_symplectic_residual(&p)?,
            z.mu_flow_invariance(&p, 1e-3)?
        );
    }
    Ok(())
}
