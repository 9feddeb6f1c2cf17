//! Compactly supported test functions and distributional pairings.

use alloc::vec;
use alloc::vec::Vec;

use super::measure::SecondDerivativeMeasure;
use super::ConvexFunction;
use crate::error::{check_dim, invalid, Error, Result};
use crate::math;
use crate::quadrature::{graded_interval_nodes, interval_nodes, tensor_integrate, GaussRule, NodeSet};

pub const DEFAULT_PAIRING_ORDER: usize = 64;
const GRADED_ORDER: usize = 24;
const GRADING_LEVELS: usize = 14;
const GRADING_RATIO: f64 = 0.25;

/// A C² test function with a known support box.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `∂_i ∂_j φ(x)`, zero-based indices.
    fn second_partial(&self, i: usize, j: usize, x: &[f64]) -> f64;

    /// Axis-aligned box containing the support; `None` if unbounded.
    fn support_box(&self) -> Option<Vec<(f64, f64)>>;

    /// Closed form of the heat semigroup `E φ(x + W_s)`, if available.
    fn heat(&self, _s: f64, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// `φ(x) = scale · Π_i (1 − u_i²)^k` with `u_i = (x_i − c_i)/h_i`, zero
/// outside the box. C^{k−1}; the default `k = 4` gives C³.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBump {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub power: u32,
    pub scale: f64,
}

impl ProductBump {
    pub fn new(center: Vec<f64>, half_width: Vec<f64>, power: u32) -> Result<Self> {
        check_dim(center.len(), half_width.len())?;
        if center.is_empty() {
            return Err(invalid("center", "test function needs dimension >= 1"));
        }
        if half_width.iter().any(|h| !(*h > 0.0) || !h.is_finite()) || !math::all_finite(&center) {
            return Err(invalid("half_width", "must be finite and > 0"));
        }
        if power < 3 {
            return Err(invalid("power", "must be >= 3 for a C² bump"));
        }
        Ok(Self {
            center,
            half_width,
            power,
            scale: 1.0,
        })
    }

    /// Bump rescaled to unit integral.
    pub fn normalized(center: Vec<f64>, half_width: Vec<f64>, power: u32) -> Result<Self> {
        let mut b = Self::new(center, half_width, power)?;
        b.scale = 1.0 / b.integral();
        Ok(b)
    }

    /// `∫_{-1}^{1} (1 − u²)^k du = 2^{2k+1} (k!)² / (2k+1)!`.
    fn unit_integral(k: u32) -> f64 {
        let mut acc = 2.0;
        for j in 1..=k {
            acc *= (2 * j) as f64 / (2 * j + 1) as f64;
        }
        acc
    }

    pub fn integral(&self) -> f64 {
        self.scale
            * self
                .half_width
                .iter()
                .map(|h| h * Self::unit_integral(self.power))
                .product::<f64>()
    }

    fn factor(&self, axis: usize, x: f64) -> (f64, f64, f64) {
        let h = self.half_width[axis];
        let u = (x - self.center[axis]) / h;
        if math::abs(u) >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let k = self.power as i32;
        let kf = k as f64;
        let w = 1.0 - u * u;
        let v = math::powi(w, k);
        let d1 = -2.0 * kf * u * math::powi(w, k - 1);
        let d2 = -2.0 * kf * math::powi(w, k - 1) + 4.0 * kf * (kf - 1.0) * u * u * math::powi(w, k - 2);
        (v, d1 / h, d2 / (h * h))
    }

    /// `E (1 − ((y + σZ)/h)²)^k` restricted to the support.
    fn heat_factor(&self, axis: usize, y: f64, sigma: f64) -> f64 {
        let h = self.half_width[axis];
        if sigma == 0.0 {
            return self.factor(axis, y + self.center[axis]).0;
        }
        // polynomial in z of (1 − ((y + σz)/h)²)
        let base = [1.0 - (y / h) * (y / h), -2.0 * y * sigma / (h * h), -(sigma * sigma) / (h * h)];
        let mut poly = vec![1.0];
        for _ in 0..self.power {
            let mut next = vec![0.0; poly.len() + 2];
            for (i, a) in poly.iter().enumerate() {
                for (j, b) in base.iter().enumerate() {
                    next[i + j] += a * b;
                }
            }
            poly = next;
        }
        let lo = (-h - y) / sigma;
        let hi = (h - y) / sigma;
        let moments = truncated_normal_moments(lo, hi, poly.len());
        poly.iter().zip(&moments).map(|(c, m)| c * m).sum()
    }
}

/// `M_j = ∫_lo^hi z^j φ(z) dz` for `j < count`.
fn truncated_normal_moments(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut m = vec![0.0; count.max(2)];
    m[0] = if lo > 0.0 {
        math::normal_cdf(-lo) - math::normal_cdf(-hi)
    } else {
        math::normal_cdf(hi) - math::normal_cdf(lo)
    };
    let (plo, phi) = (math::normal_pdf(lo), math::normal_pdf(hi));
    m[1] = plo - phi;
    let (mut lo_pow, mut hi_pow) = (lo, hi);
    for j in 2..count {
        m[j] = (j as f64 - 1.0) * m[j - 2] + lo_pow * plo - hi_pow * phi;
        lo_pow *= lo;
        hi_pow *= hi;
    }
    m.truncate(count);
    m
}

impl TestFunction for ProductBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.scale;
        for (k, xi) in x.iter().enumerate() {
            v *= self.factor(k, *xi).0;
        }
        v
    }

    fn second_partial(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        let mut v = self.scale;
        for (k, xk) in x.iter().enumerate() {
            let (f0, f1, f2) = self.factor(k, *xk);
            v *= match (k == i, k == j) {
                (true, true) => f2,
                (true, false) | (false, true) => f1,
                (false, false) => f0,
            };
        }
        v
    }

    fn support_box(&self) -> Option<Vec<(f64, f64)>> {
        Some(
            self.center
                .iter()
                .zip(&self.half_width)
                .map(|(c, h)| (c - h, c + h))
                .collect(),
        )
    }

    fn heat(&self, s: f64, x: &[f64]) -> Option<f64> {
        if !(s >= 0.0) {
            return None;
        }
        let sigma = math::sqrt(s);
        let mut v = self.scale;
        for (k, xk) in x.iter().enumerate() {
            v *= self.heat_factor(k, xk - self.center[k], sigma);
        }
        Some(v)
    }
}

fn box_axes(
    bx: &[(f64, f64)],
    breakpoints: impl Fn(usize) -> Vec<f64>,
    order: usize,
) -> Result<Vec<NodeSet>> {
    if bx.len() > 3 {
        return Err(Error::Precondition("tensor quadrature supports d <= 3".into()));
    }
    let rule = GaussRule::legendre(order)?;
    Ok(bx
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| interval_nodes(a, b, &breakpoints(k), &rule))
        .collect())
}

/// `∫ f ∂_i∂_j φ dx` over the support box of `φ`, tensor Gauss–Legendre with
/// `order` nodes per panel and panels split at the kinks of `f`.
pub fn second_derivative_pairing(
    f: &dyn ConvexFunction,
    phi: &dyn TestFunction,
    i: usize,
    j: usize,
    order: usize,
) -> Result<f64> {
    check_dim(f.dim(), phi.dim())?;
    if i >= f.dim() || j >= f.dim() {
        return Err(invalid("index", "derivative index out of range"));
    }
    let bx = phi.support_box().ok_or(Error::UnboundedSupport)?;
    let axes = box_axes(&bx, |k| f.axis_breakpoints(k), order)?;
    tensor_integrate(&axes, "second_derivative_pairing", |x| {
        f.eval(x) * phi.second_partial(i, j, x)
    })
}

/// `∫ tr Q φ dx + Σ tr(W_k) φ(y_k)` for a second-derivative measure.
/// `breakpoints(axis)` lists where the density may be non-smooth.
pub fn measure_trace_pairing(
    mu: &SecondDerivativeMeasure,
    phi: &dyn TestFunction,
    breakpoints: impl Fn(usize) -> Vec<f64>,
    order: usize,
) -> Result<f64> {
    check_dim(mu.dim, phi.dim())?;
    let bx = phi.support_box().ok_or(Error::UnboundedSupport)?;
    if bx.len() > 3 {
        return Err(Error::Precondition("tensor quadrature supports d <= 3".into()));
    }
    // densities such as 1/|x| blow up at breakpoints; grade panels towards them
    let rule = GaussRule::legendre(order.min(GRADED_ORDER))?;
    let axes: Vec<NodeSet> = bx
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| graded_interval_nodes(a, b, &breakpoints(k), GRADING_LEVELS, GRADING_RATIO, &rule))
        .collect();
    let dens = tensor_integrate(&axes, "measure_trace_pairing", |x| {
        mu.density_at(x).trace() * phi.value(x)
    })?;
    let atoms: f64 = mu
        .atoms
        .iter()
        .map(|a| a.weight.trace() * phi.value(&a.location))
        .sum();
    Ok(dens + atoms)
}
