#![cfg_attr(not(test), no_std)]
//! Numerical toolkit for stochastic calculus of convex functions.
//!
//! Monte-Carlo estimators of compensators, traces and Alexandrov Hessians,
//! heat-kernel identities evaluated by quadrature, the cone-grid geometry
//! used to control convex interpolation error, and checkers for the two
//! quantitative inequalities relating sups of a function to its Brownian
//! expectations. The crate is `no_std` + `alloc`; parallel execution is
//! delegated to an [`brownian::Executor`] supplied by the caller.

extern crate alloc;

pub mod brownian;
pub mod cone_grid;
pub mod convex_model;
pub mod derivative_estimators;
pub mod error;
pub mod heat_kernel;
pub mod linalg;
pub mod math;
pub mod quadrature;
pub mod sampling;
pub mod verifier;

pub use error::{Error, Result};
