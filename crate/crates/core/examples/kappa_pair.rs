//! Plant a canonical gauge on a lens, then rebuild it from the two flow
//! charts alone and validate the result.

use std::sync::Arc;

use hamlens::boundary::shapes::disk;
use hamlens::canonical::gauges::{bump_lift, Bump};
use hamlens::canonical::{
    build_psi, conjugation_residual, kappa_from_pair, pullback_residual, scattering_agreement, Transported,
};
use hamlens::boundary::BoundaryCovector;
use hamlens::hamiltonians::builtin::lens;
use hamlens::{IntegratorConfig, Model, PhasePoint};

fn main() -> hamlens::Result<()> {
    let cfg = IntegratorConfig::default().tight();
    let h: Model = Arc::new(lens(2, 0.3));
    let planted = bump_lift(Bump::new(&[0.0, 0.0], 0.6), 0.1, &[1.0, 0.5]);
    let ht: Model = Arc::new(Transported::new(h.clone(), planted.clone()));
    let d = Arc::new(disk(1.0));

    let entries: Vec<_> = (0..5).map(|k| BoundaryCovector::new(1, &[3.0 + 0.1 * k as f64], &[-0.4 + 0.2 * k as f64])).collect();
    println!("scattering data agree to {:.1e}", scattering_agreement(h.as_ref(), ht.as_ref(), &d, &entries, 0.5, &cfg)?);

    let kappa = kappa_from_pair(&build_psi(h.clone(), d.clone(), 1, &cfg)?, &build_psi(ht.clone(), d.clone(), 1, &cfg)?)?;
    for p in [PhasePoint::new(&[0.1, -0.1], &[0.7, 0.3]), PhasePoint::new(&[-0.2, 0.3], &[0.2, -0.9])] {
        println!(
            "at {:?}: recovery {:.1e}  symplectic {:.1e}  H - H~∘κ {:.1e}  conjugation {:.1e}",
            p.state().as_slice(),
            kappa.apply(&p)?.dist(&planted.apply(&p)?),
            kappa.symplectic_residual(&p)?,
            pullback_residual(&kappa, h.as_ref(), ht.as_ref(), &p)?,
            conjugation_residual(&kappa, h.as_ref(), ht.as_ref(), &p, 0.3, &cfg)?
        );
    }
    Ok(())
}
