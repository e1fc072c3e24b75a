//! Travel times by shooting, and the first conjugate point along the axis of
//! a focusing lens.

use hamlens::hamiltonians::builtin::{constant_speed, lens};
use hamlens::traveltime::{first_conjugate_time, travel_time};
use hamlens::{IntegratorConfig, Vector};

fn main() -> hamlens::Result<()> {
    let cfg = IntegratorConfig::default();
    let x = Vector::from_column_slice(&[-0.5, 0.0]);

    let c = constant_speed(2, 2.0);
    let y = Vector::from_column_slice(&[0.5, 0.3]);
    let r = travel_time(&c, &x, &y, None, &cfg)?;
    println!("constant speed 2: T = {:.12} (|y-x|/2 = {:.12})", r.t, (&y - &x).norm() / 2.0);

    let h = lens(2, 0.4);
    for y in [[0.5, 0.0], [0.5, 0.3], [0.2, -0.4]] {
        let y = Vector::from_column_slice(&y);
        let r = travel_time(&h, &x, &y, None, &cfg)?;
        println!(
            "lens: T({:?} -> {:?}) = {:.12}  newton {}  det {:.4}",
            x.as_slice(),
            y.as_slice(),
            r.t,
            r.newton_iters,
            r.exp_jacobian_det
        );
    }

    let x0 = Vector::from_column_slice(&[-3.0, 0.0]);
    let xi0 = Vector::from_column_slice(&[1.0, 0.0]);
    match first_conjugate_time(&h, &x0, &xi0, 8.0, &cfg)? {
        Some(t) => println!("first conjugate point on the axis at t = {t:.6}"),
        None => println!("no conjugate point before t = 8"),
    }
    Ok(())
}
