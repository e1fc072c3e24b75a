//! Numerical laboratory for Hamiltonian flows on manifolds with boundary.
//!
//! The crate covers degree-two homogeneous Hamiltonians and their flows,
//! boundary restriction and scattering at positive and zero energy, travel
//! times and their generating-function identities, the X-ray and light-ray
//! transforms with gauge reconstruction, canonical maps built from flow
//! charts, lifts and generating functions, and the bridge to Finsler
//! structures through the Legendre transform.
//!
//! ```
//! use hamlens::boundary::shapes::disk;
//! use hamlens::boundary::{BoundaryCovector, Branch};
//! use hamlens::flow::IntegratorConfig;
//! use hamlens::hamiltonians::builtin::euclidean;
//! use hamlens::scattering::scatter;
//!
//! let bc = BoundaryCovector::new(1, &[std::f64::consts::PI], &[0.0]);
//! let rec = scatter(&euclidean(2), &disk(1.0), &bc, 0.5, Branch::Incoming, &IntegratorConfig::default()).unwrap();
//! assert!((rec.ell - 2.0).abs() < 1e-9);
//! ```
//!
//! The `hamlens` binary runs TOML scenarios through [`cli`].

pub mod boundary;
pub mod canonical;
pub mod cli;
pub mod error;
pub mod expr;
pub mod finsler;
pub mod flow;
pub mod hamiltonians;
pub mod linalg;
pub mod ode;
pub mod quad;
pub mod scattering;
pub mod transforms;
pub mod traveltime;

pub use error::{Error, Result};
pub use flow::IntegratorConfig;
pub use hamiltonians::{Hamiltonian, Model, PhasePoint};
pub use linalg::{Matrix, Vector};
