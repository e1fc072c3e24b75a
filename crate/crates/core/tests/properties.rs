//! Property tests for the structural invariants: homogeneity, the flow group
//! law and reversibility, rescaling, symplecticity, scattering homogeneity,
//! the Legendre transform, and round trips through the text formats.

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use hamlens::boundary::shapes::{disk, slab};
use hamlens::boundary::{BoundaryCovector, Branch};
use hamlens::cli::config::load;
use hamlens::cli::output::num;
use hamlens::expr::{Expr, Vars};
use hamlens::finsler::{self, builtin as fb, FinslerModel};
use hamlens::flow::{flow_map, integrate, rescale_check};
use hamlens::hamiltonians::builtin::{by_name, euclidean, lens, minkowski, NAMES};
use hamlens::hamiltonians::Scaled;
use hamlens::scattering::scatter;
use hamlens::{Hamiltonian, IntegratorConfig, Model, PhasePoint, Vector};

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn point2() -> impl Strategy<Value = PhasePoint> {
    (-0.8f64..0.8, -0.8f64..0.8, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("nonzero covector", |p| p.2.abs() + p.3.abs() > 0.1)
        .prop_map(|(a, b, c, d)| PhasePoint::new(&[a, b], &[c, d]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn builtins_are_quadratic_in_xi(p in point2(), lambda in 0.05f64..20.0, k in 0..6usize) {
        let h = by_name(NAMES[k], 2).unwrap();
        let a = h.value(&p.x, &(&p.xi * lambda));
        let b = lambda * lambda * h.value(&p.x, &p.xi);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn gradients_match_differences(p in point2(), k in 0..6usize) {
        let h = by_name(NAMES[k], 2).unwrap();
        let s = 1e-5;
        for i in 0..2 {
            let mut e = Vector::zeros(2);
            e[i] = s;
            let dx = (h.value(&(&p.x + &e), &p.xi) - h.value(&(&p.x - &e), &p.xi)) / (2.0 * s);
            let dxi = (h.value(&p.x, &(&p.xi + &e)) - h.value(&p.x, &(&p.xi - &e))) / (2.0 * s);
            prop_assert!((dx - h.grad_x(&p.x, &p.xi)[i]).abs() < 1e-7);
            prop_assert!((dxi - h.grad_xi(&p.x, &p.xi)[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn flow_is_a_group(p in point2(), s in -0.8f64..0.8, t in -0.8f64..0.8) {
        let h = lens(2, 0.4);
        let c = cfg().tight();
        let two = flow_map(&h, &flow_map(&h, &p, s, &c).unwrap(), t, &c).unwrap();
        let one = flow_map(&h, &p, s + t, &c).unwrap();
        prop_assert!(two.dist(&one) < 1e-8);
        let back = flow_map(&h, &one, -(s + t), &c).unwrap();
        prop_assert!(back.dist(&p) < 1e-8);
    }

    #[test]
    fn flow_conserves_energy_and_form(p in point2(), t in 0.1f64..1.5) {
        let h = lens(2, 0.4);
        let tr = integrate(&h, &p, (0.0, t), &cfg().jacobian(true)).unwrap();
        prop_assert!(tr.energy_drift(&h) < 1e-8);
        prop_assert!(tr.symplectic_drift().unwrap() < 1e-6);
    }

    #[test]
    fn rescaling_law(p in point2(), lambda in 0.2f64..5.0, t in 0.1f64..1.0) {
        prop_assert!(rescale_check(&lens(2, 0.3), &p, lambda, t, &cfg().tight()).unwrap() < 1e-7);
    }

    #[test]
    fn euclidean_disk_chords(u in 0.0f64..(2.0 * PI), xi_p in -0.95f64..0.95) {
        let chart = if u.cos() > 0.0 { 0 } else { 1 };
        let u = if chart == 0 && u > PI { u - 2.0 * PI } else { u };
        let rec = scatter(&euclidean(2), &disk(1.0), &BoundaryCovector::new(chart, &[u], &[xi_p]), 0.5, Branch::Incoming, &cfg()).unwrap();
        prop_assert!((rec.exit.x.norm() - 1.0).abs() < 1e-9);
        prop_assert!((rec.ell - 2.0 * (1.0 - xi_p * xi_p).sqrt()).abs() < 1e-8);
        prop_assert!((rec.exit.xi.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn null_scattering_is_homogeneous(u in -1.0f64..1.0, tau in 0.3f64..2.0, sign in prop::bool::ANY, lambda in 0.2f64..5.0) {
        let tau = if sign { tau } else { -tau };
        let h: Model = Arc::new(Scaled::new(Arc::new(minkowski(2)) as Model, Arc::new(|x: &Vector, _: &Vector| 1.0 + 0.4 * x[1])));
        let s = slab(2, 1, 0.0, 1.0);
        let bc = BoundaryCovector::new(0, &[u], &[tau]);
        let a = scatter(h.as_ref(), &s, &bc, 0.0, Branch::Incoming, &cfg()).unwrap();
        let b = scatter(h.as_ref(), &s, &bc.scaled(lambda), 0.0, Branch::Incoming, &cfg()).unwrap();
        prop_assert!(b.exit_bc.dist(&a.exit_bc.scaled(lambda)) < 1e-8);
        prop_assert!((b.ell * lambda - a.ell).abs() < 1e-8);
    }

    #[test]
    fn legendre_round_trip(x0 in -0.8f64..0.8, x1 in -0.8f64..0.8, a in 0.0f64..(2.0 * PI), r in 0.1f64..3.0) {
        let fm = fb::randers_swirl(2);
        let x = Vector::from_column_slice(&[x0, x1]);
        let w = Vector::from_column_slice(&[r * a.cos(), r * a.sin()]);
        let xi = fm.legendre(&x, &w);
        let back = finsler::legendre_inverse(&fm, &x, &xi, None).unwrap();
        prop_assert!((back - &w).amax() < 1e-8 * r.max(1.0));
        // F*(ℒw) = F(w), and F*(ξ)F(v) ≥ ξ(v)
        let dual = finsler::dual_norm(&fm, &x, &xi).unwrap();
        prop_assert!((dual - fm.norm(&x, &w)).abs() < 1e-9 * r.max(1.0));
        let probe = Vector::from_column_slice(&[a.sin(), -a.cos() + 0.3]);
        prop_assert!(xi.dot(&probe) <= dual * fm.norm(&x, &probe) + 1e-12);
    }

    #[test]
    fn expression_matches_direct_evaluation(a in -5.0f64..5.0, b in -5.0f64..5.0, x in -2.0f64..2.0, xi in -2.0f64..2.0) {
        let src = format!("{} * x1 + sin({} * xi2)^2 - exp(-x1^2) / (1 + xi2^2)", num(a), num(b));
        let e = Expr::parse(&src).unwrap();
        let got = e.eval(&Vars { x: &[x], xi: &[0.0, xi], ..Default::default() });
        let want = a * x + (b * xi).sin().powi(2) - (-x * x).exp() / (1.0 + xi * xi);
        prop_assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn number_format_round_trips(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let back: f64 = num(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn overrides_reach_the_scenario(seed in 0u64..1_000_000, rays in 1usize..200, energy in 0.01f64..10.0) {
        let text = include_str!("../scenarios/euclid_disk.toml");
        let ov = vec![format!("seed={seed}"), format!("params.rays={rays}"), format!("params.energy={}", num(energy))];
        let sc = load(text, &ov).unwrap();
        prop_assert_eq!(sc.seed, seed);
        prop_assert_eq!(sc.params.rays, rays);
        prop_assert_eq!(sc.params.energy.to_bits(), energy.to_bits());
    }
}
