//! Scattering relation of a lens in the unit disk: a fan of entries on the
//! left boundary chart, the exit data, and the inverse check.

use hamlens::boundary::shapes::disk;
use hamlens::boundary::{BoundaryCovector, Branch};
use hamlens::hamiltonians::builtin::lens;
use hamlens::scattering::{inverse_residual, lambda_consistency, scatter};
use hamlens::IntegratorConfig;

fn main() -> hamlens::Result<()> {
    let (h, d) = (lens(2, 0.3), disk(1.0));
    let cfg = IntegratorConfig::default();
    let u = std::f64::consts::PI;

    println!("{:>8} {:>6} {:>10} {:>10} {:>9} {:>9}", "xi'", "chart", "exit u", "exit xi'", "ell", "inverse");
    for k in 0..9 {
        let xi = -0.8 + 0.2 * k as f64;
        let bc = BoundaryCovector::new(1, &[u], &[xi]);
        let rec = scatter(&h, &d, &bc, 0.5, Branch::Incoming, &cfg)?;
        let inv = inverse_residual(&h, &d, &rec, &cfg)?;
        println!(
            "{xi:>8.3} {:>6} {:>10.6} {:>10.6} {:>9.6} {inv:>9.1e}",
            rec.exit_bc.chart, rec.exit_bc.u[0], rec.exit_bc.xi_prime[0], rec.ell
        );
    }

    let bc = BoundaryCovector::new(1, &[u], &[0.5]);
    let (dx, dt) = lambda_consistency(&h, &d, &bc, 2.0, &cfg)?;
    println!("S_λ from the unit level vs direct at E = 2: {dx:.1e} {dt:.1e}");
    Ok(())
}
