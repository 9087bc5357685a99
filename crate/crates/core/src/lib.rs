//! Discrete diffusive transport on the lattice δℤ.
//!
//! The crate provides exact lattice calculus ([`grid`]), the discrete heat
//! kernel ([`kernels`]), the inverse Laplacian ([`poisson`]), time-discrete
//! curves and their action ([`curves`]), an explicit finite-action connector
//! ([`connector`]), a convex geodesic solver ([`geodesic`]), the three
//! gradient flows ([`flows`]) and a contraction certification harness
//! ([`harness`]).

pub mod error;
pub mod grid;
pub mod kernels;
pub mod poisson;
pub mod curves;
pub mod connector;
pub mod geodesic;
pub mod flows;
pub mod harness;

pub use error::{Error, Result};
