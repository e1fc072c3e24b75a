//! X-ray transform on a lens: the kernel contains X_H φ for φ vanishing on
//! the boundary, and φ is recovered from X_H φ by integrating back to the
//! entry point.

use std::sync::Arc;

use hamlens::boundary::shapes::disk;
use hamlens::boundary::{solve_zeta, BoundaryCovector, Branch};
use hamlens::flow::flow_map;
use hamlens::hamiltonians::builtin::lens;
use hamlens::scattering::scatter;
use hamlens::transforms::{gauge_potential, xray, PhaseFunction};
use hamlens::IntegratorConfig;

fn main() -> hamlens::Result<()> {
    let (h, d) = (lens(2, 0.3), disk(1.0));
    let cfg = IntegratorConfig::default();
    let phi = PhaseFunction::new("phi", 1, Arc::new(|x, xi| (1.0 - x.norm_squared()) * (xi[0] + 0.5 * x[1] * xi[1])));
    let xh_phi = PhaseFunction::hamilton_derivative(h.clone(), &phi);
    let f = PhaseFunction::new("1-|x|^2", 0, Arc::new(|x, _| 1.0 - x.norm_squared()));

    println!("{:>7} {:>12} {:>12} {:>12}", "xi'", "Xf", "X(X_H phi)", "gauge err");
    for k in 0..7 {
        let xi = -0.75 + 0.25 * k as f64;
        let bc = BoundaryCovector::new(1, &[std::f64::consts::PI], &[xi]);
        let entry = solve_zeta(&h, &d, &bc, 0.5, Branch::Incoming)?;
        let ell = scatter(&h, &d, &bc, 0.5, Branch::Incoming, &cfg)?.ell;
        let mid = flow_map(&h, &entry, 0.4 * ell, &cfg)?;
        let rec = gauge_potential(&h, &d, &xh_phi, &mid, &cfg)?;
        println!(
            "{xi:>7.3} {:>12.8} {:>12.1e} {:>12.1e}",
            xray(&h, &d, &f, &entry, &cfg)?,
            xray(&h, &d, &xh_phi, &entry, &cfg)?,
            (rec - phi.eval(&mid)).abs()
        );
    }
    Ok(())
}
