use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::measure::SecondDerivativeMeasure;
use super::{ConvexFunction, Growth, SharedFunction};
use crate::error::{invalid, Result};
use crate::math;
use crate::quadrature::{gaussian_expectation, GaussRule};

pub const DEFAULT_HERMITE_ORDER: usize = 32;

/// Gaussian smoothing `f_eps(x) = E f(x + eps Z)`.
///
/// Uses the inner function's closed forms when it has them and tensor
/// Gauss–Hermite quadrature otherwise. Either way `f_eps` is a positive
/// combination of translates of `f`, hence convex, and `f_eps >= f` by
/// Jensen. Smoothing composes: `(f_a)_b = f_{sqrt(a² + b²)}`.
#[derive(Clone)]
pub struct Mollified {
    inner: SharedFunction,
    eps: f64,
    rule: Arc<GaussRule>,
}

impl core::fmt::Debug for Mollified {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Mollified")
            .field("eps", &self.eps)
            .field("order", &self.rule.len())
            .finish_non_exhaustive()
    }
}

pub fn mollify(f: SharedFunction, eps: f64, order: usize) -> Result<Mollified> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid("eps", "must be finite and > 0"));
    }
    if order < 2 {
        return Err(invalid("order", "Gauss-Hermite order must be >= 2"));
    }
    Ok(Mollified {
        inner: f,
        eps,
        rule: Arc::new(GaussRule::hermite_normal(order)?),
    })
}

pub(crate) fn gauss_hermite_value(
    f: &dyn ConvexFunction,
    rule: &GaussRule,
    x: &[f64],
    eps: f64,
) -> Result<f64> {
    gaussian_expectation(rule, x, eps, "mollify", |y| f.eval(y))
}

impl Mollified {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn inner(&self) -> &SharedFunction {
        &self.inner
    }

    fn total_eps(&self, extra: f64) -> f64 {
        math::sqrt(self.eps * self.eps + extra * extra)
    }

    fn gh_gradient(&self, x: &[f64], eps: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                gaussian_expectation(&self.rule, x, eps, "mollify", |y| self.inner.subgradient(y)[i])
                    .unwrap_or(f64::NAN)
            })
            .collect()
    }

    fn fd_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let h = self.eps / 10.0;
        let mut m = DMatrix::zeros(d, d);
        let mut y = x.to_vec();
        for j in 0..d {
            y[j] = x[j] + h;
            let up = self.subgradient(&y);
            y[j] = x[j] - h;
            let down = self.subgradient(&y);
            y[j] = x[j];
            for i in 0..d {
                m[(i, j)] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        crate::linalg::symmetrize(&m)
    }
}

impl ConvexFunction for Mollified {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.inner
            .smoothed_value(x, self.eps)
            .unwrap_or_else(|| gauss_hermite_value(&*self.inner, &self.rule, x, self.eps).unwrap_or(f64::NAN))
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.inner
            .smoothed_gradient(x, self.eps)
            .unwrap_or_else(|| self.gh_gradient(x, self.eps))
    }

    fn growth(&self) -> Growth {
        let g = self.inner.growth();
        let k = g.degree.max(1);
        let d = self.dim() as f64;
        // |x + eps z|^k <= 2^(k-1)(|x|^k + eps^k |z|^k), E|Z|^k <= (d + k)^(k/2)
        let c = math::powi(2.0, k as i32 - 1);
        let moment = math::powf(d + k as f64, k as f64 / 2.0);
        Growth {
            a: g.a * c,
            b: g.b + g.a * c * math::powi(self.eps, k as i32) * moment,
            degree: g.degree,
        }
    }

    fn hessian_density(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(
            self.inner
                .smoothed_hessian(x, self.eps)
                .unwrap_or_else(|| self.fd_hessian(x)),
        )
    }

    /// Only available with a closed-form smoothed Hessian: the Gauss–Hermite
    /// fallback is a finite sum of translates of `f` and keeps its kinks.
    fn second_derivative_measure(&self) -> Option<SecondDerivativeMeasure> {
        let dim = self.dim();
        self.inner.smoothed_hessian(&alloc::vec![0.0; dim], self.eps)?;
        let me = self.clone();
        Some(SecondDerivativeMeasure::absolutely_continuous(
            dim,
            Arc::new(move |x| me.hessian_density(x).unwrap_or_else(|| DMatrix::zeros(dim, dim))),
        ))
    }

    fn is_smooth(&self) -> bool {
        true
    }

    fn smoothed_value(&self, x: &[f64], eps: f64) -> Option<f64> {
        self.inner.smoothed_value(x, self.total_eps(eps))
    }

    fn smoothed_gradient(&self, x: &[f64], eps: f64) -> Option<Vec<f64>> {
        self.inner.smoothed_gradient(x, self.total_eps(eps))
    }

    fn smoothed_hessian(&self, x: &[f64], eps: f64) -> Option<DMatrix<f64>> {
        self.inner.smoothed_hessian(x, self.total_eps(eps))
    }
}
