//! Light-ray transform across a Minkowski slab, its gauge kernel, and the
//! invariance of null curves under conformal rescaling of the Hamiltonian.

use std::sync::Arc;

use hamlens::boundary::shapes::slab;
use hamlens::boundary::{solve_zeta, BoundaryCovector, Branch};
use hamlens::hamiltonians::builtin::minkowski;
use hamlens::transforms::{lightray, lightray_reparam_check, PhaseFunction};
use hamlens::{IntegratorConfig, Model};

fn main() -> hamlens::Result<()> {
    let h: Model = Arc::new(minkowski(2));
    let d = slab(2, 1, 0.0, 1.0);
    let cfg = IntegratorConfig::default();
    let f = PhaseFunction::new("f", 2, Arc::new(|x, xi| (-x[1]).exp() * xi[0] * xi[0]));
    let phi = PhaseFunction::new("phi", 1, Arc::new(|x, xi| x[1] * (1.0 - x[1]) * (xi[0] + x[0] * xi[1])));
    let xh_phi = PhaseFunction::hamilton_derivative(h.clone(), &phi);
    let mu = Arc::new(|x: &hamlens::Vector, _: &hamlens::Vector| 1.0 + 0.2 * x[1]);

    for tau in [0.5, 1.0, 1.5] {
        let entry = solve_zeta(h.as_ref(), &d, &BoundaryCovector::new(0, &[0.0], &[tau]), 0.0, Branch::Incoming)?;
        let lf = lightray(h.as_ref(), &d, &f, &entry, &cfg)?;
        let kernel = lightray(h.as_ref(), &d, &xh_phi, &entry, &cfg)?;
        let (a, b) = lightray_reparam_check(h.clone(), mu.clone(), &d, &f, &entry, &cfg)?;
        println!("tau'={tau:.1}  Lf={lf:.10}  L(X_H phi)={kernel:.1e}  L_muH f - L_H(f/mu)={:.1e}", a - b);
    }
    Ok(())
}
