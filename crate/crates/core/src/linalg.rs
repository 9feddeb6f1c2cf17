//! Small dense linear algebra on top of nalgebra.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math;

pub const PSD_TOL: f64 = 1e-10;

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = 1.0 + math::abs(m[(i, j)]).max(math::abs(m[(j, i)]));
            if math::abs(m[(i, j)] - m[(j, i)]) > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = symmetrize(m);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute eigenvalue of the symmetric part of `m`.
pub fn spectral_radius_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| math::abs(*v))
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Checks symmetry and `eigenvalues >= -tol`.
pub fn check_psd(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !is_symmetric(m, 1e-12) {
        return Err(Error::NotPsd {
            min_eigenvalue: f64::NAN,
        });
    }
    let lo = min_eigenvalue(m);
    if lo < -tol {
        return Err(Error::NotPsd { min_eigenvalue: lo });
    }
    Ok(())
}

/// 2-norm condition number via singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for (j, xj) in x.iter().enumerate() {
            acc += m[(i, j)] * xj;
        }
        out[i] = acc;
    }
    out
}

/// `<m x, x>`.
pub fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * x[j];
        }
        acc += row * x[i];
    }
    acc
}

/// Result of a minimum-norm-point search over a convex hull.
#[derive(Debug, Clone)]
pub struct HullPoint {
    /// Convex weights, one per input point.
    pub weights: Vec<f64>,
    pub point: Vec<f64>,
}

/// Minimum-norm point of `conv(points)`.
///
/// Enumerates affinely independent supports of size at most `dim + 1`
/// (Carathéodory) in a fixed order and solves the equality-constrained KKT
/// system on each; the first support attaining the minimum wins, so the
/// result is deterministic. Intended for the handful of active pieces of a
/// max-affine function or the corners of a cone cross-section.
pub fn min_norm_in_hull(points: &[Vec<f64>]) -> Result<HullPoint> {
    let m = points.len();
    if m == 0 {
        return Err(Error::Precondition("empty point set".into()));
    }
    let dim = points[0].len();
    if m > 20 {
        return Err(Error::ResourceLimit(alloc::format!(
            "min_norm_in_hull supports at most 20 points, got {m}"
        )));
    }
    let max_support = (dim + 1).min(m);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut subset = Vec::with_capacity(max_support);
    for size in 1..=max_support {
        for_each_combination(m, size, &mut subset, &mut |idx| {
            if let Some(w) = affine_min_norm(points, idx) {
                if w.iter().all(|&v| v >= -1e-12) {
                    let mut full = vec![0.0; m];
                    for (k, &i) in idx.iter().enumerate() {
                        full[i] = w[k].max(0.0);
                    }
                    let s: f64 = full.iter().sum();
                    for v in &mut full {
                        *v /= s;
                    }
                    let p = combine(points, &full);
                    let nn = math::norm_sq(&p);
                    let better = match &best {
                        None => true,
                        Some((b, _)) => nn < *b * (1.0 - 1e-12),
                    };
                    if better {
                        best = Some((nn, full));
                    }
                }
            }
        });
    }
    let (_, weights) = best.ok_or_else(|| Error::Geometry("no feasible support".into()))?;
    let point = combine(points, &weights);
    Ok(HullPoint { weights, point })
}

fn combine(points: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let dim = points[0].len();
    let mut p = vec![0.0; dim];
    for (pt, &wi) in points.iter().zip(w) {
        if wi != 0.0 {
            for (a, b) in p.iter_mut().zip(pt) {
                *a += wi * b;
            }
        }
    }
    p
}

/// Minimises `|sum w_i p_i|` subject to `sum w_i = 1` over the support `idx`.
fn affine_min_norm(points: &[Vec<f64>], idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for a in 0..k {
        for b in 0..k {
            kkt[(a, b)] = math::dot(&points[idx[a]], &points[idx[b]]);
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    rhs[k] = 1.0;
    // reject affinely dependent supports: they are covered by smaller ones
    let gram_scale = (0..k).map(|a| kkt[(a, a)]).fold(1.0, f64::max);
    let lu = kkt.clone().lu();
    let sol = lu.solve(&rhs)?;
    let resid = &kkt * &sol - &rhs;
    if resid.amax() > 1e-9 * gram_scale || sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // Gram determinant check for affine independence.
    let mut diffs = DMatrix::<f64>::zeros(points[0].len(), k - 1);
    for c in 1..k {
        for r in 0..points[0].len() {
            diffs[(r, c - 1)] = points[idx[c]][r] - points[idx[0]][r];
        }
    }
    let sv = diffs.singular_values();
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 || lo <= 1e-12 * hi {
        return None;
    }
    Some(sol.rows(0, k).iter().copied().collect())
}

fn for_each_combination(
    n: usize,
    k: usize,
    buf: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    fn rec(start: usize, n: usize, k: usize, buf: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if buf.len() == k {
            f(buf);
            return;
        }
        for i in start..n {
            if n - i < k - buf.len() {
                break;
            }
            buf.push(i);
            rec(i + 1, n, k, buf, f);
            buf.pop();
        }
    }
    buf.clear();
    rec(0, n, k, buf, f);
}
