//! Randers structure with a rotating drift: Legendre map, dual norm against a
//! direct maximization, and scattering computed on both sides of the
//! Legendre transform.

use std::sync::Arc;

use hamlens::boundary::shapes::disk;
use hamlens::finsler::{builtin, dual_norm, dual_norm_oracle, finsler_scatter, legendre_inverse, Finsler};
use hamlens::{IntegratorConfig, Vector};

fn main() -> hamlens::Result<()> {
    let fm: Finsler = Arc::new(builtin::randers_swirl(2));
    let cfg = IntegratorConfig::default().tight();

    let x = Vector::from_column_slice(&[0.2, -0.1]);
    let xi = Vector::from_column_slice(&[0.6, 0.8]);
    let v = legendre_inverse(fm.as_ref(), &x, &xi, None)?;
    println!("v = L^-1(xi) = {:?}", v.as_slice());
    println!("F*(xi) = {:.12}  oracle {:.12}", dual_norm(fm.as_ref(), &x, &xi)?, dual_norm_oracle(fm.as_ref(), &x, &xi));

    let x = Vector::from_column_slice(&[-1.0, 0.0]);
    for a in [-0.6f64, -0.2, 0.2, 0.6] {
        let w = Vector::from_column_slice(&[a.cos(), a.sin()]);
        let u = &w / fm.norm(&x, &w);
        let s = finsler_scatter(fm.clone(), &disk(1.0), &x, &u, &cfg)?;
        println!(
            "angle {a:+.1}: exit ({:+.6}, {:+.6})  ell {:.8}  routes differ by {:.1e}",
            s.exit_x[0], s.exit_x[1], s.ell, s.route_residual
        );
    }
    Ok(())
}
