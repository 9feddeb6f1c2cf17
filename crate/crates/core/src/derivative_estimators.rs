//! Monte-Carlo estimators of the Alexandrov Hessian `Q(x)`.
//!
//! All estimators draw `W_t = √t Z` through [`MonteCarlo::run`], so a fixed
//! seed reproduces them bit for bit, and estimators that share a seed share
//! their normal draws.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::brownian::{Executor, MCEstimate, MonteCarlo};
use crate::convex_model::{compose_linear, make_corpus_function, ConvexFunction, CorpusSpec};
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg;
use crate::math;

/// Smallest admissible time; keeps `stderr / t` bounded at feasible `n`.
pub const MIN_T: f64 = 1e-6;
/// Largest condition number accepted for a linear map.
pub const MAX_CONDITION: f64 = 1e8;
pub const MAX_POLARIZATION_DIM: usize = 8;

fn check_t(t: f64) -> Result<()> {
    if !(t >= MIN_T) || !t.is_finite() {
        return Err(invalid("t", alloc::format!("must be finite and >= {MIN_T:e}")));
    }
    Ok(())
}

fn check_subgradient_gap(gap: f64, fx: f64, fy: f64, y: &[f64]) -> Result<()> {
    if gap < -1e-12 * (1.0 + math::abs(fx) + math::abs(fy)) {
        return Err(Error::NegativeIntegrand {
            value: gap,
            sample: y.to_vec(),
        });
    }
    Ok(())
}

/// `(1/t) E[f(x + W_t) − f(x) − ⟨p(x), W_t⟩]`, which tends to `½ tr Q(x)`.
///
/// The integrand is nonnegative by the subgradient inequality; a sample
/// below `−1e-12·(1 + |f(x)| + |f(x + W_t)|)` aborts with that sample.
pub fn trace_estimate<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    t: f64,
    mc: &MonteCarlo<E>,
) -> Result<MCEstimate> {
    linear_map_kernel(f, x, None, t, mc)
}

/// `(1/t) E[f(x + S W_t) − f(x) − ⟨p(x), S W_t⟩]`, which tends to
/// `½ tr(Sᵀ Q(x) S)`.
pub fn linear_map_trace<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    s: &DMatrix<f64>,
    t: f64,
    mc: &MonteCarlo<E>,
) -> Result<MCEstimate> {
    let d = x.len();
    if s.nrows() != d || s.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s.nrows(),
        });
    }
    let cond = linalg::condition_number(s);
    if !(cond < MAX_CONDITION) {
        return Err(Error::SingularMatrix { condition: cond });
    }
    linear_map_kernel(f, x, Some(s), t, mc)
}

fn linear_map_kernel<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    s: Option<&DMatrix<f64>>,
    t: f64,
    mc: &MonteCarlo<E>,
) -> Result<MCEstimate> {
    check_dim(f.dim(), x.len())?;
    check_t(t)?;
    let d = x.len();
    let fx = f.eval(x);
    let p = f.subgradient(x);
    let sd = math::sqrt(t);
    let accs = mc.run(d, 1, || {
        let (p, fx) = (&p, fx);
        let mut w = vec![0.0; d];
        let mut y = vec![0.0; d];
        move |z: &[f64], out: &mut [f64]| {
            for (wi, zi) in w.iter_mut().zip(z) {
                *wi = sd * zi;
            }
            if let Some(s) = s {
                let sw = linalg::mat_vec(s, &w);
                w.copy_from_slice(&sw);
            }
            for k in 0..d {
                y[k] = x[k] + w[k];
            }
            let fy = f.eval(&y);
            let gap = fy - fx - math::dot(p, &w);
            check_subgradient_gap(gap, fx, fy, &y)?;
            out[0] = gap / t;
            Ok(())
        }
    })?;
    Ok(accs[0].estimate(t, mc.seed))
}

/// One sample of `(2/t)[f(x + b v) − f(x) − c ⟨p, v⟩ b]`, `c ∈ {0, 1}`.
#[inline]
fn directional_sample(
    f: &dyn ConvexFunction,
    x: &[f64],
    fx: f64,
    pv: f64,
    v: &[f64],
    b: f64,
    t: f64,
    y: &mut [f64],
) -> f64 {
    for k in 0..x.len() {
        y[k] = x[k] + b * v[k];
    }
    2.0 * (f.eval(y) - fx - pv * b) / t
}

/// `(2/t) E[f(x + B_t v) − f(x)]` with a one-dimensional Brownian `B_t`;
/// tends to `⟨Q(x) v, v⟩`. With `control_variate` the mean-zero term
/// `⟨p(x), v⟩ B_t` is subtracted inside the expectation.
pub fn directional_second_derivative<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    v: &[f64],
    t: f64,
    control_variate: bool,
    mc: &MonteCarlo<E>,
) -> Result<MCEstimate> {
    check_dim(f.dim(), x.len())?;
    check_dim(x.len(), v.len())?;
    check_t(t)?;
    let norm = math::norm(v);
    if math::abs(norm - 1.0) > 1e-12 {
        return Err(Error::NonUnitDirection { norm });
    }
    let fx = f.eval(x);
    let pv = if control_variate {
        math::dot(&f.subgradient(x), v)
    } else {
        0.0
    };
    let sd = math::sqrt(t);
    let accs = mc.run(1, 1, || {
        let mut y = vec![0.0; x.len()];
        move |z: &[f64], out: &mut [f64]| {
            out[0] = directional_sample(f, x, fx, pv, v, sd * z[0], t, &mut y);
            Ok(())
        }
    })?;
    Ok(accs[0].estimate(t, mc.seed))
}

/// Symmetric estimate of `Q(x)` with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianEstimate {
    pub matrix: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    pub t: f64,
    pub n: usize,
}

/// Recovers `Q(x)` from directional probes by polarization,
/// `Q_ij = q((e_i + e_j)/√2) − ½(q(e_i) + q(e_j))` with `q(u) = ⟨Qu, u⟩`.
///
/// All probes share one Brownian draw per sample, and the diagonal is
/// computed exactly as [`directional_second_derivative`] along `e_i` with the
/// control variate, so the two agree bit for bit under the same seed.
pub fn hessian_by_polarization<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    t: f64,
    mc: &MonteCarlo<E>,
) -> Result<HessianEstimate> {
    let d = x.len();
    check_dim(f.dim(), d)?;
    check_t(t)?;
    if d > MAX_POLARIZATION_DIM {
        return Err(invalid("dim", "polarization supports d <= 8"));
    }
    let fx = f.eval(x);
    let p = f.subgradient(x);
    let sd = math::sqrt(t);
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let mut u = vec![0.0; d];
            u[i] = core::f64::consts::FRAC_1_SQRT_2;
            u[j] = core::f64::consts::FRAC_1_SQRT_2;
            let pu = math::dot(&p, &u);
            pairs.push((i, j, u, pu));
        }
    }
    let outputs = d + pairs.len();
    let accs = mc.run(1, outputs, || {
        let mut y = vec![0.0; d];
        let (axes, pairs, p) = (&axes, &pairs, &p);
        move |z: &[f64], out: &mut [f64]| {
            let b = sd * z[0];
            for i in 0..d {
                out[i] = directional_sample(f, x, fx, p[i], &axes[i], b, t, &mut y);
            }
            for (k, (i, j, u, pu)) in pairs.iter().enumerate() {
                let q = directional_sample(f, x, fx, *pu, u, b, t, &mut y);
                out[d + k] = q - 0.5 * (out[*i] + out[*j]);
            }
            Ok(())
        }
    })?;
    let mut matrix = DMatrix::zeros(d, d);
    let mut stderr = DMatrix::zeros(d, d);
    for i in 0..d {
        matrix[(i, i)] = accs[i].mean;
        stderr[(i, i)] = accs[i].stderr();
    }
    for (k, (i, j, _, _)) in pairs.iter().enumerate() {
        let a = &accs[d + k];
        matrix[(*i, *j)] = a.mean;
        matrix[(*j, *i)] = a.mean;
        stderr[(*i, *j)] = a.stderr();
        stderr[(*j, *i)] = a.stderr();
    }
    Ok(HessianEstimate {
        matrix,
        stderr,
        t,
        n: mc.n,
    })
}

fn resolve_q(f: &dyn ConvexFunction, x: &[f64], q: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let q = match q {
        Some(q) => q.clone(),
        None => f.hessian_density(x).ok_or(Error::MissingHessian)?,
    };
    if q.nrows() != x.len() || q.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: q.nrows(),
        });
    }
    Ok(q)
}

/// `(1/t) E|f(x + W_t) − f(x) − ⟨p(x), W_t⟩ − ½⟨Q W_t, W_t⟩|`.
///
/// `q` overrides the analytic Hessian; without either the call fails with
/// [`Error::MissingHessian`].
pub fn ito_residual<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    t: f64,
    q: Option<&DMatrix<f64>>,
    mc: &MonteCarlo<E>,
) -> Result<MCEstimate> {
    let curve = residual_curve(f, x, &[t], q, mc)?;
    let p = curve.points[0];
    Ok(MCEstimate {
        mean: p.value,
        stderr: p.stderr,
        n: mc.n,
        t,
        seed: mc.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Itô residual `L(t)` over a decreasing sequence of times.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCurve {
    pub points: Vec<ResidualPoint>,
    pub x: Vec<f64>,
    pub function: String,
}

/// `t_max · 2^{-k}` for `k = 0..count`.
pub fn dyadic_times(t_max: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| t_max * math::powi(0.5, k as i32)).collect()
}

/// Residual at every time in `times` (strictly decreasing) from a single set
/// of normal draws: the sample at time `t` is built from `√t Z` with the
/// same `Z`, which keeps the curve smooth in `t`.
pub fn residual_curve<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    times: &[f64],
    q: Option<&DMatrix<f64>>,
    mc: &MonteCarlo<E>,
) -> Result<ResidualCurve> {
    check_dim(f.dim(), x.len())?;
    if times.is_empty() {
        return Err(invalid("times", "need at least one time"));
    }
    for &t in times {
        check_t(t)?;
    }
    if times.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("times", "must be strictly decreasing"));
    }
    let q = resolve_q(f, x, q)?;
    let d = x.len();
    let fx = f.eval(x);
    let p = f.subgradient(x);
    let accs = mc.run(d, times.len(), || {
        let (q, p) = (&q, &p);
        let mut w = vec![0.0; d];
        let mut y = vec![0.0; d];
        move |z: &[f64], out: &mut [f64]| {
            for (k, &t) in times.iter().enumerate() {
                let sd = math::sqrt(t);
                for i in 0..d {
                    w[i] = sd * z[i];
                    y[i] = x[i] + w[i];
                }
                let r = f.eval(&y) - fx - math::dot(p, &w) - 0.5 * linalg::quad_form(q, &w);
                out[k] = math::abs(r) / t;
            }
            Ok(())
        }
    })?;
    Ok(ResidualCurve {
        points: times
            .iter()
            .zip(&accs)
            .map(|(&t, a)| ResidualPoint {
                t,
                value: a.mean,
                stderr: a.stderr(),
            })
            .collect(),
        x: x.to_vec(),
        function: String::new(),
    })
}

/// Outcome of fitting `log L(t) = slope · log t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFit {
    Decay { slope: f64, intercept: f64, used: usize },
    /// Every point is statistically indistinguishable from zero.
    IdenticallyZero,
}

/// Least-squares fit over points with `value > 3·stderr` and
/// `value > 1e-12`; the rest are consistent with zero and dropped.
pub fn residual_rate_fit(curve: &ResidualCurve) -> Result<RateFit> {
    let used: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.value > 3.0 * p.stderr && p.value > 1e-12)
        .map(|p| (math::ln(p.t), math::ln(p.value)))
        .collect();
    if used.is_empty() {
        return Ok(RateFit::IdenticallyZero);
    }
    if used.len() < 4 {
        return Err(Error::InsufficientPoints {
            needed: 4,
            found: used.len(),
        });
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("times", "all fitted times coincide"));
    }
    let slope = sxy / sxx;
    Ok(RateFit::Decay {
        slope,
        intercept: my - slope * mx,
        used: used.len(),
    })
}

/// Largest entry of `|Q_{f∘S}(x) − Sᵀ Q_f(Sx) S|` over `points`.
///
/// The Hessian of `x ↦ f(Sx)` comes from the symbolic composition of the
/// descriptor when the corpus is closed under it, and from central second
/// differences of values otherwise. Points where either side has no
/// Alexandrov Hessian are skipped.
pub fn density_transform_check(spec: &CorpusSpec, s: &DMatrix<f64>, points: &[Vec<f64>]) -> Result<f64> {
    let f = make_corpus_function(spec)?;
    let d = f.dim();
    if s.nrows() != d || s.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s.nrows(),
        });
    }
    let composed = match compose_linear(spec, s) {
        Some(c) => Some(make_corpus_function(&c)?),
        None => None,
    };
    let mut worst: Option<f64> = None;
    for x in points {
        check_dim(d, x.len())?;
        let sx = linalg::mat_vec(s, x);
        let Some(q) = f.hessian_density(&sx) else {
            continue;
        };
        let law = s.transpose() * q * s;
        let lhs = match &composed {
            Some(c) => match c.hessian_density(x) {
                Some(h) => h,
                None => continue,
            },
            None => fd_hessian(|y| f.eval(&linalg::mat_vec(s, y)), x, 1e-4),
        };
        let dev = (lhs - law).amax();
        worst = Some(worst.map_or(dev, |w: f64| w.max(dev)));
    }
    worst.ok_or_else(|| Error::Precondition("no sample point has a Hessian on both sides".into()))
}

fn fd_hessian(g: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut m = DMatrix::zeros(d, d);
    let mut y = x.to_vec();
    for i in 0..d {
        for j in i..d {
            let mut corner = |si: f64, sj: f64| {
                y.copy_from_slice(x);
                y[i] += si * h;
                y[j] += sj * h;
                g(&y)
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
