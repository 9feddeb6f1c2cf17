//! Gauss rules, tensor-product cubature and adaptive Simpson.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;

/// A one-dimensional quadrature rule: nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gauss–Legendre rule on `[-1, 1]`.
    pub fn legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("order", "Gauss-Legendre order must be >= 1"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = math::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            for _ in 0..100 {
                let (p, dp) = legendre_eval(n, z);
                let z1 = z;
                z = z1 - p / dp;
                if math::abs(z - z1) <= 1e-15 {
                    break;
                }
            }
            let pp = legendre_eval(n, z).1;
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    /// Gauss–Hermite rule for the standard normal: `E[g(Z)] ≈ Σ w_i g(z_i)`.
    ///
    /// Weights sum to one and nodes are symmetric about zero.
    pub fn hermite_normal(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("order", "Gauss-Hermite order must be >= 1"));
        }
        // Physicists' nodes via the orthonormal recurrence, then rescaled.
        const PIM4: f64 = 0.751_125_544_464_942_5;
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => math::sqrt(2.0 * nf + 1.0) - 1.855_75 * math::powf(2.0 * nf + 1.0, -1.0 / 6.0),
                1 => z - 1.14 * math::powf(nf, 0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * math::sqrt(2.0 / (jf + 1.0)) * p2 - math::sqrt(jf / (jf + 1.0)) * p3;
                }
                pp = math::sqrt(2.0 * nf) * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if math::abs(z - z1) <= 1e-14 * (1.0 + math::abs(z)) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let sqrt_pi = math::sqrt(core::f64::consts::PI);
        let mut nodes: Vec<f64> = x.iter().map(|v| v * core::f64::consts::SQRT_2).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        // ascending order
        nodes.reverse();
        weights.reverse();
        Ok(Self { nodes, weights })
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> NodeSet {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        NodeSet {
            points: self.nodes.iter().map(|z| mid + half * z).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_eval(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
    }
    (p1, n as f64 * (z * p1 - p2) / (z * z - 1.0))
}

/// Points and weights along one axis.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeSet {
    pub fn extend(&mut self, other: NodeSet) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

/// Composite rule on `[a, b]` with a panel boundary at every breakpoint that
/// falls strictly inside the interval.
pub fn interval_nodes(a: f64, b: f64, breakpoints: &[f64], rule: &GaussRule) -> NodeSet {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&c| c > a && c < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    cuts.dedup();
    let mut set = NodeSet::default();
    let mut lo = a;
    for c in cuts.into_iter().chain(core::iter::once(b)) {
        if c > lo {
            set.extend(rule.on_interval(lo, c));
        }
        lo = c;
    }
    set
}

/// Like [`interval_nodes`], with panels refined geometrically (ratio
/// `ratio`, `levels` layers) towards every breakpoint so that integrable
/// point singularities there are resolved.
pub fn graded_interval_nodes(
    a: f64,
    b: f64,
    breakpoints: &[f64],
    levels: usize,
    ratio: f64,
    rule: &GaussRule,
) -> NodeSet {
    let mut cuts = Vec::new();
    for &c in breakpoints {
        cuts.push(c);
        let mut w = b - a;
        for _ in 0..levels {
            w *= ratio;
            cuts.push(c - w);
            cuts.push(c + w);
        }
    }
    interval_nodes(a, b, &cuts, rule)
}

/// Tensor-product sum `Σ Π w_k f(x)` over the given per-axis node sets.
///
/// A non-finite integrand value aborts with the offending point.
pub fn tensor_integrate(
    axes: &[NodeSet],
    context: &'static str,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let d = axes.len();
    if d == 0 {
        return Ok(f(&[]));
    }
    if axes.iter().any(|a| a.points.is_empty()) {
        return Ok(0.0);
    }
    let mut idx = vec![0usize; d];
    let mut x: Vec<f64> = axes.iter().map(|a| a.points[0]).collect();
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for k in 0..d {
            w *= axes[k].weights[idx[k]];
        }
        let v = f(&x);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context,
                value: v,
                sample: x.clone(),
            });
        }
        total += w * v;
        // odometer
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < axes[k].points.len() {
                x[k] = axes[k].points[idx[k]];
                break;
            }
            idx[k] = 0;
            x[k] = axes[k].points[0];
            k += 1;
            if k == d {
                return Ok(total);
            }
        }
    }
}

/// `E[g(center + scale·Z)]`, `Z ~ N(0, I_d)`, by tensor Gauss–Hermite.
pub fn gaussian_expectation(
    rule: &GaussRule,
    center: &[f64],
    scale: f64,
    context: &'static str,
    g: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let axes: Vec<NodeSet> = center
        .iter()
        .map(|&c| NodeSet {
            points: rule.nodes.iter().map(|z| c + scale * z).collect(),
            weights: rule.weights.clone(),
        })
        .collect();
    tensor_integrate(&axes, context, g)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    for (x, v) in [(a, fa), (m, fm), (b, fb)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "adaptive_simpson",
                value: v,
                sample: vec![x],
            });
        }
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&mut f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() || !frm.is_finite() {
        let (x, v) = if flm.is_finite() { (rm, frm) } else { (lm, flm) };
        return Err(Error::NonFinite {
            context: "adaptive_simpson",
            value: v,
            sample: vec![x],
        });
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || math::abs(delta) <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
