//! Bicharacteristics of a Gaussian lens: energy conservation, symplecticity
//! of the variational matrix and the rescaling law of degree-two flows.

use hamlens::flow::{integrate, rescale_check, IntegratorConfig};
use hamlens::hamiltonians::builtin::lens;
use hamlens::{Hamiltonian, PhasePoint};

fn main() -> hamlens::Result<()> {
    let h = lens(2, 0.4);
    let cfg = IntegratorConfig::default().jacobian(true);
    let p0 = PhasePoint::new(&[-1.0, 0.25], &[1.0, 0.0]);

    let tr = integrate(&h, &p0, (0.0, 2.0), &cfg)?;
    println!("{} from {:?}", h.name(), p0.state().as_slice());
    for k in 0..=4 {
        let t = 0.5 * k as f64;
        let p = tr.point_at(t);
        println!("  t={t:.1}  x=({:+.6}, {:+.6})  H={:.12}", p.x[0], p.x[1], h.eval(&p));
    }
    println!("energy drift      {:.2e}", tr.energy_drift(&h));
    println!("symplectic drift  {:.2e}", tr.symplectic_drift().unwrap());

    for lambda in [0.5, 2.0, 5.0] {
        let r = rescale_check(&h, &p0, lambda, 0.7, &IntegratorConfig::default().tight())?;
        println!("rescaling λ={lambda}: {r:.2e}");
    }
    Ok(())
}
