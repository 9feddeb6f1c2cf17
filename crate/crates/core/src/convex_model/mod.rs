//! Convex function oracles and their second-derivative measures.
//!
//! A [`ConvexFunction`] exposes values, a fixed subgradient selection (the
//! least-norm element of the subdifferential), a growth bound and, where it
//! is known analytically, the Alexandrov Hessian `Q(x)` and the full
//! second-derivative measure. Closed forms for the Gaussian smoothing
//! `x -> E f(x + eps Z)` are optional; [`mollify`] falls back to
//! Gauss–Hermite quadrature without them.

mod corpus;
mod extension;
mod lipschitz;
mod measure;
mod mollify;
mod test_function;

pub use corpus::{compose_linear, make_corpus_function, CorpusFunction, CorpusSpec, Piece};
pub use extension::{extend_from_ball, BallExtension, DEFAULT_EXTENSION_GRID};
pub use lipschitz::{lipschitz_on_ball, sampled_lipschitz, C_LIP_PER_DIM};
pub use measure::{Atom, ScalarMeasure, SecondDerivativeMeasure};
pub use mollify::{mollify, Mollified, DEFAULT_HERMITE_ORDER};
pub use test_function::{
    measure_trace_pairing, second_derivative_pairing, ProductBump, TestFunction,
    DEFAULT_PAIRING_ORDER,
};

use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::math;

/// Shared handle to a convex oracle.
pub type SharedFunction = Arc<dyn ConvexFunction>;

/// `|f(x)| <= a * |x|^degree + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub a: f64,
    pub b: f64,
    pub degree: u32,
}

impl Growth {
    pub fn bound(&self, x_norm: f64) -> f64 {
        self.a * math::powi(x_norm, self.degree as i32) + self.b
    }
}

pub trait ConvexFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Least-norm element of the subdifferential at `x`.
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;

    fn growth(&self) -> Growth;

    /// Alexandrov Hessian `Q(x)`; `None` where it is not known, e.g. on the
    /// singular support of the second-derivative measure.
    fn hessian_density(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn second_derivative_measure(&self) -> Option<SecondDerivativeMeasure> {
        None
    }

    /// `true` when `f` is C² everywhere, so its Laplacian is a pointwise
    /// trace of [`ConvexFunction::hessian_density`].
    fn is_smooth(&self) -> bool {
        false
    }

    /// Closed form of `E f(x + eps Z)`.
    fn smoothed_value(&self, _x: &[f64], _eps: f64) -> Option<f64> {
        None
    }

    /// Closed form of `∇ E f(x + eps Z)`.
    fn smoothed_gradient(&self, _x: &[f64], _eps: f64) -> Option<Vec<f64>> {
        None
    }

    /// Closed form of `∇² E f(x + eps Z)`.
    fn smoothed_hessian(&self, _x: &[f64], _eps: f64) -> Option<DMatrix<f64>> {
        None
    }

    /// Coordinates along `axis` where `f` may fail to be smooth; quadrature
    /// places panel boundaries there.
    fn axis_breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
}

/// Laplacian of `f` (when `eps == 0`) or of its Gaussian smoothing at scale
/// `eps`. Without a closed form the smoothed Laplacian is a central second
/// difference of the mollified oracle with step `eps / 10`.
pub fn laplacian(f: &dyn ConvexFunction, x: &[f64], eps: f64) -> Result<f64> {
    if eps == 0.0 {
        if !f.is_smooth() {
            return Err(Error::Precondition(
                "Laplacian of a non-smooth function needs eps > 0".into(),
            ));
        }
        return f
            .hessian_density(x)
            .map(|q| q.trace())
            .ok_or(Error::Precondition("smooth function without Hessian".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(crate::error::invalid("eps", "must be finite and >= 0"));
    }
    if let Some(h) = f.smoothed_hessian(x, eps) {
        return Ok(h.trace());
    }
    let h = eps / 10.0;
    let rule = crate::quadrature::GaussRule::hermite_normal(DEFAULT_HERMITE_ORDER)?;
    let value = |y: &[f64]| mollify::gauss_hermite_value(f, &rule, y, eps);
    let centre = value(x)?;
    let mut y = x.to_vec();
    let mut acc = 0.0;
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let up = value(&y)?;
        y[i] = x[i] - h;
        let down = value(&y)?;
        y[i] = x[i];
        acc += (up - 2.0 * centre + down) / (h * h);
    }
    Ok(acc)
}
