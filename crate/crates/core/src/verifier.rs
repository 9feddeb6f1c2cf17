//! Checkers for the quantitative inequalities behind second
//! differentiability: sup-by-expectation, the dyadic recursion on the Itô
//! remainder, and the Revuz–trace identity.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::brownian::{batch_rng, expect, Executor, MonteCarlo};
use crate::convex_model::{
    laplacian, second_derivative_pairing, ConvexFunction, CorpusSpec, Piece, TestFunction,
    DEFAULT_PAIRING_ORDER,
};
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg;
use crate::math;
use rand_core::RngCore;

/// Grid points per axis for sups over a ball.
pub const SUP_GRID: usize = 1001;
/// Local refinements started from the best grid points.
const REFINE_STARTS: usize = 5;

/// Frozen sup-by-expectation constants `C(d)` for `d = 1, 2`: 1.05 times the
/// largest ratio `s / ((rL)^α G^{1−α})` over [`sup_exp_corpus`] at
/// `r ∈ {1, 0.5, 0.25}`, `n = 10⁶`, seed [`CALIBRATION_SEED`].
pub const SUP_EXP_C: [f64; 2] = [1.6616, 1.4336];
pub const CALIBRATION_SEED: u64 = 2024;
pub const CALIBRATION_RADII: [f64; 3] = [1.0, 0.5, 0.25];

/// `α = d / (d + 1)`.
pub fn alpha(d: usize) -> f64 {
    d as f64 / (d as f64 + 1.0)
}

/// Frozen `C(d)`, if calibrated for `d`.
pub fn sup_exp_constant(d: usize) -> Option<f64> {
    SUP_EXP_C.get(d.wrapping_sub(1)).copied().filter(|c| c.is_finite())
}

/// `lhs ≤ rhs` with the constants that entered `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub c: f64,
    pub alpha: f64,
    pub margin: f64,
    pub pass: bool,
    pub context: String,
    /// Radius or time the check was run at.
    pub param: f64,
}

impl InequalityReport {
    pub fn new(lhs: f64, rhs: f64, c: f64, alpha: f64, context: String, param: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            lhs,
            rhs,
            c,
            alpha,
            margin,
            pass: margin >= -1e-10 * (1.0 + math::abs(rhs)),
            context,
            param,
        }
    }
}

/// Sup and Lipschitz constant of `g` over a closed ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSup {
    pub sup: f64,
    pub argmax: Vec<f64>,
    /// Largest difference quotient between neighbouring grid points.
    pub lipschitz: f64,
    /// Smallest value seen on the grid.
    pub min: f64,
}

/// Sup of `g` over `B(0, r)` in `d ≤ 2` from a `SUP_GRID`-per-axis grid
/// followed by a projected compass search from the best grid points.
pub fn sup_on_ball<E, G>(g: &G, d: usize, r: f64, executor: &E) -> Result<BallSup>
where
    E: Executor,
    G: Fn(&[f64]) -> f64 + Sync + Send,
{
    if d == 0 || d > 2 {
        return Err(invalid("d", "ball sups are implemented for d = 1 and d = 2"));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid("r", "must be finite and > 0"));
    }
    let m = SUP_GRID;
    let h = 2.0 * r / (m - 1) as f64;
    let coord = |k: usize| -r + h * k as f64;
    let rows: usize = if d == 1 { 1 } else { m };
    let inside = |p: &[f64]| math::norm_sq(p) <= r * r * (1.0 + 1e-14);
    let row_values: Vec<Vec<f64>> = executor.map(rows, |row| {
        let mut p = vec![0.0; d];
        (0..m)
            .map(|k| {
                p[0] = coord(k);
                if d == 2 {
                    p[1] = coord(row);
                }
                if inside(&p) {
                    g(&p)
                } else {
                    f64::NAN
                }
            })
            .collect()
    });
    let point = |row: usize, k: usize| -> Vec<f64> {
        if d == 1 {
            vec![coord(k)]
        } else {
            vec![coord(k), coord(row)]
        }
    };
    let mut best: Vec<(f64, usize, usize)> = Vec::new();
    let mut min = f64::INFINITY;
    let mut lip = 0.0f64;
    for (row, vals) in row_values.iter().enumerate() {
        for (k, &v) in vals.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "sup_on_ball",
                    value: v,
                    sample: point(row, k),
                });
            }
            min = min.min(v);
            best.push((v, row, k));
            best.sort_by(|a, b| b.0.total_cmp(&a.0));
            best.truncate(REFINE_STARTS);
            let mut neighbour = |w: f64, dist: f64| {
                if !w.is_nan() {
                    lip = lip.max(math::abs(v - w) / dist);
                }
            };
            if k + 1 < m {
                neighbour(vals[k + 1], h);
            }
            if d == 2 && row + 1 < m {
                let next = &row_values[row + 1];
                neighbour(next[k], h);
                if k + 1 < m {
                    neighbour(next[k + 1], h * core::f64::consts::SQRT_2);
                }
                if k > 0 {
                    neighbour(next[k - 1], h * core::f64::consts::SQRT_2);
                }
            }
        }
    }
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = vec![0.0; d];
    for &(v, row, k) in &best {
        let (p, val) = compass_search(g, point(row, k), v, h, r);
        if val > sup {
            sup = val;
            argmax = p;
        }
    }
    Ok(BallSup {
        sup,
        argmax,
        lipschitz: lip,
        min,
    })
}

fn compass_search<G: Fn(&[f64]) -> f64>(g: &G, mut p: Vec<f64>, mut v: f64, h: f64, r: f64) -> (Vec<f64>, f64) {
    let d = p.len();
    let mut step = h;
    let mut q = vec![0.0; d];
    while step > h * 1e-9 {
        let mut moved = false;
        for axis in 0..d {
            for sign in [1.0, -1.0] {
                q.copy_from_slice(&p);
                q[axis] += sign * step;
                let n = math::norm(&q);
                if n > r {
                    for c in q.iter_mut() {
                        *c *= r / n;
                    }
                }
                let w = g(&q);
                if w > v {
                    v = w;
                    p.copy_from_slice(&q);
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (p, v)
}

/// Measured sides of the sup-by-expectation inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct SupExpReport {
    pub s: f64,
    pub lipschitz: f64,
    pub g_mean: f64,
    pub g_stderr: f64,
    pub report: InequalityReport,
}

/// `s ≤ C (r L)^α G^{1−α}` with `s = sup_{B(r)} g`, `L = Lip_{B(r)} g` and
/// `G = E g(W_t)` at `t = r²`, for `g ≥ 0` with `g(0) = 0`.
pub fn sup_expectation_bound<E, G>(
    g: &G,
    d: usize,
    r: f64,
    c: f64,
    mc: &MonteCarlo<E>,
    context: &str,
) -> Result<SupExpReport>
where
    E: Executor,
    G: Fn(&[f64]) -> f64 + Sync + Send,
{
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid("c", "must be finite and > 0"));
    }
    let g0 = g(&vec![0.0; d]);
    if math::abs(g0) > 1e-12 {
        return Err(Error::Precondition(format!("g(0) = {g0:e}, expected 0")));
    }
    let sup = sup_on_ball(g, d, r, &mc.executor)?;
    if sup.min < -1e-12 {
        return Err(Error::Precondition(format!("g takes the negative value {:e}", sup.min)));
    }
    let est = expect(mc, d, r * r, g)?;
    let a = alpha(d);
    let rhs = c * math::powf(r * sup.lipschitz, a) * math::powf(est.mean.max(0.0), 1.0 - a);
    Ok(SupExpReport {
        s: sup.sup,
        lipschitz: sup.lipschitz,
        g_mean: est.mean,
        g_stderr: est.stderr,
        report: InequalityReport::new(sup.sup, rhs, c, a, context.into(), r),
    })
}

/// `s / ((rL)^α G^{1−α})`, or 0 when `s = 0`.
pub fn sup_exp_ratio(rep: &SupExpReport, d: usize, r: f64) -> f64 {
    if rep.s <= 0.0 {
        return 0.0;
    }
    let a = alpha(d);
    rep.s / (math::powf(r * rep.lipschitz, a) * math::powf(rep.g_mean, 1.0 - a))
}

/// Deterministic corpus of 50 convex descriptors `h` in dimension `d ∈ {1, 2}`
/// used to build `g(y) = |h(y) − h(0) − ⟨p_h(0), y⟩|`.
pub fn sup_exp_corpus(d: usize, seed: u64) -> Result<Vec<(String, CorpusSpec)>> {
    if d == 0 || d > 2 {
        return Err(invalid("d", "corpus is defined for d = 1 and d = 2"));
    }
    let mut rng = batch_rng(seed, 0);
    let mut u = move |lo: f64, hi: f64| lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut out = Vec::with_capacity(50);
    out.push((format!("abs_{d}d"), CorpusSpec::AbsNorm { dim: d }));
    out.push((format!("half_norm_sq_{d}d"), CorpusSpec::half_norm_sq(d)));
    while out.len() < 50 {
        let k = out.len();
        let spec = match k % 4 {
            0 => {
                let mut b = DMatrix::zeros(d, d);
                for v in b.iter_mut() {
                    *v = u(-1.5, 1.5);
                }
                let a = &b * b.transpose();
                let lin: Vec<f64> = (0..d).map(|_| u(-1.0, 1.0)).collect();
                CorpusSpec::quadratic(&a, &lin, u(-1.0, 1.0))
            }
            1 => {
                let pieces = 2 + (k / 4) % 5;
                let slopes: Vec<Vec<f64>> = (0..pieces).map(|_| (0..d).map(|_| u(-2.0, 2.0)).collect()).collect();
                let offsets: Vec<f64> = (0..pieces).map(|_| u(-0.5, 0.5)).collect();
                CorpusSpec::MaxAffine { slopes, offsets }
            }
            2 => {
                if d == 1 {
                    CorpusSpec::SumOfPieces {
                        dim: 1,
                        pieces: vec![Piece { coords: vec![0], spec: CorpusSpec::Power4 }],
                    }
                } else {
                    CorpusSpec::SumOfPieces {
                        dim: 2,
                        pieces: vec![
                            Piece { coords: vec![0], spec: CorpusSpec::Power4 },
                            Piece {
                                coords: vec![1],
                                spec: CorpusSpec::MaxAffine {
                                    slopes: vec![vec![u(-2.0, 0.0)], vec![u(0.0, 2.0)]],
                                    offsets: vec![u(-0.3, 0.3), u(-0.3, 0.3)],
                                },
                            },
                        ],
                    }
                }
            }
            _ => {
                let slopes: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| u(-3.0, 3.0)).collect()).collect();
                CorpusSpec::MaxAffine {
                    slopes,
                    offsets: vec![0.0, u(-0.2, 0.0), u(-0.2, 0.0)],
                }
            }
        };
        out.push((format!("{spec}#{k}"), spec));
    }
    Ok(out)
}

/// `g(y) = |h(y) − h(0) − ⟨p_h(0), y⟩|`.
pub fn remainder_at_origin(h: &dyn ConvexFunction) -> impl Fn(&[f64]) -> f64 + Sync + Send + '_ {
    let zero = vec![0.0; h.dim()];
    let h0 = h.eval(&zero);
    let p0 = h.subgradient(&zero);
    move |y: &[f64]| math::abs(h.eval(y) - h0 - math::dot(&p0, y))
}

/// One level of the dyadic recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionLevel {
    pub r: f64,
    /// `sup_{B(r)} g`.
    pub s: f64,
    /// `E g(W_{r²})`.
    pub g_mean: f64,
    pub g_stderr: f64,
    /// `s(r) / r²`.
    pub scaled: f64,
    /// `s(r) ≤ C (s(2r) + r²)^α G(r)^{1−α}`; absent when `G` was too noisy.
    pub bound: Option<InequalityReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionReport {
    pub levels: Vec<RecursionLevel>,
    /// `s(r_k)/r_k²` never exceeds [`RECURSION_GROWTH`] times its first value.
    pub bounded: bool,
    /// Every retained level satisfies the recursion inequality.
    pub pass: bool,
    pub warnings: Vec<String>,
}

pub const RECURSION_GROWTH: f64 = 2.0;
pub const MIN_RECURSION_LEVELS: usize = 4;

/// Default recursion constant: `2d · C(d)`, absorbing the Lipschitz bound
/// of `g` on `B(r)` by its sup on `B(2r)` plus the quadratic part.
pub fn recursion_constant(d: usize) -> Option<f64> {
    sup_exp_constant(d).map(|c| 2.0 * d as f64 * c)
}

/// Runs the recursion for `g(y) = |f(x+y) − f(x) − ⟨p,y⟩ − ½⟨Qy,y⟩|` at
/// `r_k = r_max 2^{−k}`, `k = 0..levels`; `s(2 r_0)` is computed as well.
/// Levels whose `G` has standard error above `G/3` are kept in the
/// trajectory but skip the inequality.
pub fn dyadic_recursion_check<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    p: &[f64],
    q: &DMatrix<f64>,
    r_max: f64,
    levels: usize,
    c: f64,
    mc: &MonteCarlo<E>,
) -> Result<RecursionReport> {
    let d = f.dim();
    check_dim(d, x.len())?;
    check_dim(d, p.len())?;
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q.nrows(),
        });
    }
    if levels < MIN_RECURSION_LEVELS {
        return Err(invalid("levels", "need at least 4 levels"));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(invalid("r_max", "must be finite and > 0"));
    }
    let fx = f.eval(x);
    let g = |y: &[f64]| {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        math::abs(f.eval(&z) - fx - math::dot(p, y) - 0.5 * linalg::quad_form(q, y))
    };
    let a = alpha(d);
    let mut s_prev = sup_on_ball(&g, d, 2.0 * r_max, &mc.executor)?.sup;
    let mut out = Vec::with_capacity(levels);
    let mut warnings = Vec::new();
    for k in 0..levels {
        let r = r_max * math::powi(0.5, k as i32);
        let s = sup_on_ball(&g, d, r, &mc.executor)?.sup;
        let est = expect(mc, d, r * r, &g)?;
        let bound = if est.stderr > est.mean / 3.0 {
            warnings.push(format!(
                "level {k} (r = {r:e}) dropped: stderr {:e} exceeds G/3 with G = {:e}",
                est.stderr, est.mean
            ));
            None
        } else {
            let rhs = c * math::powf(s_prev + r * r, a) * math::powf(est.mean.max(0.0), 1.0 - a);
            Some(InequalityReport::new(s, rhs, c, a, format!("recursion level {k}"), r))
        };
        out.push(RecursionLevel {
            r,
            s,
            g_mean: est.mean,
            g_stderr: est.stderr,
            scaled: s / (r * r),
            bound,
        });
        s_prev = s;
    }
    let first = out[0].scaled;
    let bounded = out
        .iter()
        .all(|l| l.scaled <= RECURSION_GROWTH * first + 1e-12);
    let pass = out.iter().all(|l| l.bound.as_ref().map_or(true, |b| b.pass));
    Ok(RecursionReport {
        levels: out,
        bounded,
        pass,
        warnings,
    })
}

/// Time-discretisation and domain of the Revuz side.
#[derive(Debug, Clone, PartialEq)]
pub struct RevuzConfig {
    /// Time panels on `[0, 1]`.
    pub steps: usize,
    /// Starting box; `None` pads the support of `φ` by 6 on every side.
    pub covering_box: Option<Vec<(f64, f64)>>,
}

impl Default for RevuzConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            covering_box: None,
        }
    }
}

pub const REVUZ_PAD: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRevuzReport {
    pub mc_side: f64,
    pub stderr: f64,
    pub quad_side: f64,
    pub n: usize,
}

impl TraceRevuzReport {
    pub fn agrees(&self, slack: f64) -> bool {
        math::abs(self.mc_side - self.quad_side) <= 3.0 * self.stderr + slack
    }
}

/// Compares `∫_box E^x[∫_0^1 φ(W_s) dA_s] dx`, with `dA_s = ½Δf(W_s) ds`
/// and the start `x` drawn uniformly from the box, against
/// `½ Σ_i (f, ∂_i² φ)`.
pub fn trace_revuz_compare<E: Executor>(
    f: &dyn ConvexFunction,
    phi: &dyn TestFunction,
    cfg: &RevuzConfig,
    mc: &MonteCarlo<E>,
) -> Result<TraceRevuzReport> {
    let d = f.dim();
    check_dim(d, phi.dim())?;
    if !f.is_smooth() {
        return Err(Error::Precondition("trace_revuz_compare needs a C² function".into()));
    }
    if cfg.steps == 0 {
        return Err(invalid("steps", "must be >= 1"));
    }
    let support = phi.support_box().ok_or(Error::UnboundedSupport)?;
    let bx = match &cfg.covering_box {
        Some(b) => {
            check_dim(d, b.len())?;
            let covers = b
                .iter()
                .zip(&support)
                .all(|(&(lo, hi), &(a, c))| lo <= a && c <= hi);
            if !covers {
                return Err(Error::Precondition("covering box does not contain the support of phi".into()));
            }
            b.clone()
        }
        None => support.iter().map(|&(a, b)| (a - REVUZ_PAD, b + REVUZ_PAD)).collect(),
    };
    let volume: f64 = bx.iter().map(|(a, b)| b - a).product();
    let inside = |w: &[f64]| support.iter().zip(w).all(|(&(a, b), &v)| a < v && v < b);
    let density = |w: &[f64]| -> Result<f64> {
        if !inside(w) {
            return Ok(0.0);
        }
        Ok(phi.value(w) * 0.5 * laplacian(f, w, 0.0)?)
    };
    let steps = cfg.steps;
    let ds = 1.0 / steps as f64;
    let sd = math::sqrt(ds);
    let accs = mc.run(d * (steps + 1), 1, || {
        let mut w = vec![0.0; d];
        let (bx, density) = (&bx, &density);
        move |z: &[f64], out: &mut [f64]| {
            for k in 0..d {
                let (lo, hi) = bx[k];
                w[k] = lo + (hi - lo) * math::normal_cdf(z[k]);
            }
            let mut prev = density(&w)?;
            let mut total = 0.0;
            for step in 1..=steps {
                for k in 0..d {
                    w[k] += sd * z[d * step + k];
                }
                let cur = density(&w)?;
                total += 0.5 * (prev + cur) * ds;
                prev = cur;
            }
            out[0] = volume * total;
            Ok(())
        }
    })?;
    let mut quad = 0.0;
    for i in 0..d {
        quad += second_derivative_pairing(f, phi, i, i, DEFAULT_PAIRING_ORDER)?;
    }
    Ok(TraceRevuzReport {
        mc_side: accs[0].mean,
        stderr: accs[0].stderr(),
        quad_side: 0.5 * quad,
        n: mc.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::Sequential;
    use crate::convex_model::{make_corpus_function, ProductBump};

    #[test]
    fn zero_function_passes_with_zero_margin() {
        let rep = sup_expectation_bound(&|_: &[f64]| 0.0, 1, 1.0, 1.5, &MonteCarlo::new(1000, 1), "zero").unwrap();
        assert_eq!(rep.report.lhs, 0.0);
        assert_eq!(rep.report.margin, 0.0);
        assert!(rep.report.pass);
    }

    #[test]
    fn abs_ratio_matches_folded_normal() {
        let h = make_corpus_function(&CorpusSpec::AbsNorm { dim: 1 }).unwrap();
        let g = remainder_at_origin(&h);
        let rep = sup_expectation_bound(&g, 1, 1.0, 2.0, &MonteCarlo::new(200_000, 3), "abs").unwrap();
        assert_eq!(rep.s, 1.0);
        assert!((rep.lipschitz - 1.0).abs() < 1e-12);
        assert!((rep.g_mean - (2.0 / core::f64::consts::PI).sqrt()).abs() < 4.0 * rep.g_stderr);
        let ratio = sup_exp_ratio(&rep, 1, 1.0);
        assert!((ratio - (2.0 / core::f64::consts::PI).powf(-0.25)).abs() < 5e-3);
    }

    #[test]
    fn negative_g_is_rejected() {
        let err = sup_expectation_bound(&|y: &[f64]| -y[0].abs(), 1, 1.0, 1.0, &MonteCarlo::new(10, 1), "neg");
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn ball_sup_in_2d_reaches_the_boundary() {
        let b = sup_on_ball(&|y: &[f64]| y[0] * y[0] + y[1] * y[1], 2, 1.0, &Sequential).unwrap();
        assert!((b.sup - 1.0).abs() < 1e-9, "{}", b.sup);
        assert!((b.lipschitz - 2.0).abs() < 1e-2);
    }

    #[test]
    fn corpus_is_deterministic_and_valid() {
        for d in [1, 2] {
            let a = sup_exp_corpus(d, 5).unwrap();
            let b = sup_exp_corpus(d, 5).unwrap();
            assert_eq!(a.len(), 50);
            assert_eq!(a, b);
            for (_, spec) in &a {
                assert_eq!(make_corpus_function(spec).unwrap().dim(), d);
            }
        }
    }

    #[test]
    fn quartic_recursion_trajectory() {
        let f = make_corpus_function(&CorpusSpec::Power4).unwrap();
        let q = DMatrix::from_element(1, 1, 12.0);
        let rep = dyadic_recursion_check(&f, &[1.0], &[4.0], &q, 0.5, 5, 3.0, &MonteCarlo::new(20_000, 1)).unwrap();
        for l in &rep.levels {
            assert!((l.scaled - (4.0 * l.r + l.r * l.r)).abs() < 1e-9, "{l:?}");
        }
        assert!(rep.bounded);
    }

    #[test]
    fn affine_near_point_gives_zero_levels() {
        let f = make_corpus_function(&CorpusSpec::AbsNorm { dim: 1 }).unwrap();
        let rep = dyadic_recursion_check(&f, &[1.0], &[1.0], &DMatrix::zeros(1, 1), 0.5, 4, 3.0, &MonteCarlo::new(1000, 1))
            .unwrap();
        assert!(rep.levels.iter().all(|l| l.s <= 1e-15));
        assert!(rep.pass && rep.bounded);
    }

    #[test]
    fn revuz_side_for_half_square() {
        let f = make_corpus_function(&CorpusSpec::half_norm_sq(1)).unwrap();
        let phi = ProductBump::normalized(vec![0.2], vec![1.0], 4).unwrap();
        let rep = trace_revuz_compare(&f, &phi, &RevuzConfig::default(), &MonteCarlo::new(20_000, 9)).unwrap();
        assert!((rep.quad_side - 0.5).abs() < 1e-10, "{rep:?}");
        assert!(rep.agrees(1e-5), "{rep:?}");
        let tight = RevuzConfig {
            steps: 8,
            covering_box: Some(vec![(-0.5, 0.5)]),
        };
        assert!(trace_revuz_compare(&f, &phi, &tight, &MonteCarlo::new(10, 1)).is_err());
    }
}
