use super::ConvexFunction;
use crate::error::{check_dim, invalid, Result};
use crate::math;
use crate::sampling;

/// `C_lip = C_LIP_PER_DIM · d` in [`lipschitz_on_ball`].
///
/// For convex `f`, `Lip_{B(r)} f <= osc_{B(2r)} f / r <= 2 sup_{B(2r)} |f| / r`,
/// so any factor of at least 2 is safe; `2d` is used.
pub const C_LIP_PER_DIM: f64 = 2.0;

const SUP_SAMPLES: usize = 4096;

/// Upper bound `(C_lip / r) · sup_{B(center, 2r)} |f|` on the Lipschitz
/// constant of `f` over `B(center, r)`, with the sup over a deterministic
/// low-discrepancy sample of the ball and its boundary.
pub fn lipschitz_on_ball(f: &dyn ConvexFunction, center: &[f64], r: f64) -> Result<f64> {
    check_dim(f.dim(), center.len())?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid("r", "radius must be finite and > 0"));
    }
    let d = center.len() as f64;
    let mut sup = 0.0f64;
    for p in sampling::ball_points(center, 2.0 * r, SUP_SAMPLES)
        .iter()
        .chain(sampling::sphere_points(center, 2.0 * r, 256).iter())
    {
        sup = sup.max(math::abs(f.eval(p)));
    }
    Ok(C_LIP_PER_DIM * d * sup / r)
}

/// Largest difference quotient over all pairs among `n` sample points of
/// `B(center, r)`; a lower estimate of the Lipschitz constant.
pub fn sampled_lipschitz(f: &dyn ConvexFunction, center: &[f64], r: f64, n: usize) -> f64 {
    let mut pts = sampling::ball_points(center, r, n);
    pts.extend(sampling::sphere_points(center, r, 64));
    let values: alloc::vec::Vec<f64> = pts.iter().map(|p| f.eval(p)).collect();
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let dist = math::dist(&pts[i], &pts[j]);
            if dist > 0.0 {
                best = best.max(math::abs(values[i] - values[j]) / dist);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_model::{make_corpus_function, CorpusSpec};
    use alloc::vec;

    #[test]
    fn bounds_dominate_sampled_quotients() {
        let cases = [
            (CorpusSpec::MaxAffine { slopes: vec![vec![3.0, -4.0]], offsets: vec![7.0] }, vec![0.0, 0.0], 5.0),
            (CorpusSpec::half_norm_sq(1), vec![0.0], 1.0),
            (CorpusSpec::AbsNorm { dim: 1 }, vec![0.0], 1.0),
            (CorpusSpec::AbsNorm { dim: 1 }, vec![0.3], 1.0),
        ];
        for (spec, center, truth) in cases {
            let f = make_corpus_function(&spec).unwrap();
            for r in [0.1, 1.0, 3.0] {
                let bound = lipschitz_on_ball(&f, &center, r).unwrap();
                let sampled = sampled_lipschitz(&f, &center, r, 300);
                assert!(bound >= sampled, "{spec}: {bound} < {sampled}");
                if r == 1.0 && center.iter().all(|c| *c == 0.0) {
                    assert!(bound >= truth, "{spec}: {bound} < {truth}");
                }
            }
        }
    }
}
