//! Pathwise estimation of the compensator `A_t = ½ ∫_0^t Δf_eps(W_s) ds`.

use alloc::vec;
use alloc::vec::Vec;

use super::{batch_rng, fill_normals, Executor, MCEstimate, MonteCarlo, DEFAULT_BATCH_SIZE};
use crate::convex_model::{laplacian, ConvexFunction};
use crate::error::{check_dim, invalid, Error, Result};
use crate::math;

/// Discretisation of the compensator integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    /// Number of time panels.
    pub steps: usize,
    pub t: f64,
    /// Number of paths.
    pub n: usize,
    /// Mollification scale; 0 is allowed only for C² functions.
    pub eps: f64,
    pub seed: u64,
}

impl PathConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps", "must be >= 1"));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(invalid("t", "must be finite and > 0"));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(invalid("eps", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Time nodes `s_k = t (k/N)²`, dense near `s = 0` where a path started
    /// on a kink sees the narrow mollified second derivative.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.steps as f64;
        (0..=self.steps)
            .map(|k| {
                let u = k as f64 / n;
                self.t * u * u
            })
            .collect()
    }
}

fn checked_laplacian(f: &dyn ConvexFunction, eps: f64) -> Result<()> {
    if eps == 0.0 && !f.is_smooth() {
        return Err(Error::Precondition(
            "eps = 0 needs a C² function: the Laplacian is undefined".into(),
        ));
    }
    Ok(())
}

/// Simulates one path from `x` and calls `panel(k, increment)` for every
/// trapezoid panel of `½ ∫ Δf_eps(W_s) ds`.
fn integrate_path(
    f: &dyn ConvexFunction,
    x: &[f64],
    grid: &[f64],
    eps: f64,
    z: &[f64],
    w: &mut [f64],
    mut panel: impl FnMut(usize, f64),
) -> Result<f64> {
    let d = x.len();
    w.copy_from_slice(x);
    let mut prev = laplacian(f, w, eps)?;
    let mut total = 0.0;
    for k in 1..grid.len() {
        let ds = grid[k] - grid[k - 1];
        let sd = math::sqrt(ds);
        for (wi, zi) in w.iter_mut().zip(&z[(k - 1) * d..k * d]) {
            *wi += sd * zi;
        }
        let cur = laplacian(f, w, eps)?;
        if !cur.is_finite() {
            return Err(Error::NonFinite {
                context: "compensator Laplacian",
                value: cur,
                sample: w.to_vec(),
            });
        }
        let inc = 0.25 * (prev + cur) * ds;
        panel(k, inc);
        total += inc;
        prev = cur;
    }
    Ok(total)
}

/// Monte-Carlo estimate of `E[A_t]` for paths started at `x`.
pub fn compensator_path_estimate<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    cfg: &PathConfig,
    executor: &E,
) -> Result<MCEstimate> {
    cfg.validate()?;
    check_dim(f.dim(), x.len())?;
    checked_laplacian(f, cfg.eps)?;
    let d = x.len();
    let grid = cfg.time_grid();
    let mc = MonteCarlo {
        n: cfg.n,
        seed: cfg.seed,
        antithetic: false,
        batch_size: DEFAULT_BATCH_SIZE,
        executor,
    };
    let accs = mc.run(d * cfg.steps, 1, || {
        let mut w = vec![0.0; d];
        let grid = &grid;
        move |z: &[f64], out: &mut [f64]| {
            out[0] = integrate_path(f, x, grid, cfg.eps, z, &mut w, |_, _| {})?;
            Ok(())
        }
    })?;
    Ok(accs[0].estimate(cfg.t, cfg.seed))
}

/// Outcome of the pathwise monotonicity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// Smallest panel increment over all paths.
    pub min_increment: f64,
    pub paths: usize,
}

/// Checks that every panel increment of the discretised compensator is
/// `>= -1e-12` along `cfg.n` simulated paths.
pub fn compensator_monotonicity_check<E: Executor>(
    f: &dyn ConvexFunction,
    x: &[f64],
    cfg: &PathConfig,
    executor: &E,
) -> Result<MonotonicityReport> {
    cfg.validate()?;
    check_dim(f.dim(), x.len())?;
    checked_laplacian(f, cfg.eps)?;
    let d = x.len();
    let grid = cfg.time_grid();
    let batches = cfg.n.div_ceil(DEFAULT_BATCH_SIZE);
    let mins = executor.map(batches, |b| -> Result<f64> {
        let count = DEFAULT_BATCH_SIZE.min(cfg.n - b * DEFAULT_BATCH_SIZE);
        let mut rng = batch_rng(cfg.seed, b);
        let mut z = vec![0.0; d * cfg.steps];
        let mut w = vec![0.0; d];
        let mut worst = f64::INFINITY;
        for _ in 0..count {
            fill_normals(&mut rng, &mut z);
            integrate_path(f, x, &grid, cfg.eps, &z, &mut w, |_, inc| {
                worst = worst.min(inc);
            })?;
        }
        Ok(worst)
    });
    let mut min_increment = f64::INFINITY;
    for m in mins {
        min_increment = min_increment.min(m?);
    }
    Ok(MonotonicityReport {
        pass: min_increment >= -1e-12,
        min_increment,
        paths: cfg.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::Sequential;
    use crate::convex_model::{make_corpus_function, CorpusSpec};

    fn cfg(t: f64, steps: usize, n: usize, eps: f64) -> PathConfig {
        PathConfig {
            steps,
            t,
            n,
            eps,
            seed: 17,
        }
    }

    #[test]
    fn quadratic_compensator_is_deterministic() {
        let f = make_corpus_function(&CorpusSpec::half_norm_sq(2)).unwrap();
        let est = compensator_path_estimate(&f, &[0.5, -1.0], &cfg(1.0, 10, 100, 0.0), &Sequential).unwrap();
        assert!((est.mean - 1.0).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn affine_compensator_vanishes() {
        let f = make_corpus_function(&CorpusSpec::MaxAffine {
            slopes: vec![vec![1.0, 2.0]],
            offsets: vec![3.0],
        })
        .unwrap();
        let est = compensator_path_estimate(&f, &[0.0, 0.0], &cfg(1.0, 10, 100, 0.1), &Sequential).unwrap();
        assert!(est.mean.abs() <= 1e-12);
        let rep = compensator_monotonicity_check(&f, &[0.0, 0.0], &cfg(1.0, 10, 100, 0.1), &Sequential).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.min_increment, 0.0);
    }

    #[test]
    fn non_smooth_without_mollification_is_rejected() {
        let f = make_corpus_function(&CorpusSpec::AbsNorm { dim: 1 }).unwrap();
        let err = compensator_path_estimate(&f, &[0.0], &cfg(1.0, 10, 10, 0.0), &Sequential).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn quadratic_minimum_increment() {
        let f = make_corpus_function(&CorpusSpec::half_norm_sq(3)).unwrap();
        let c = cfg(1.0, 4, 10, 0.0);
        let rep = compensator_monotonicity_check(&f, &[0.0; 3], &c, &Sequential).unwrap();
        // smallest panel is the first: ds = t/N², increment = ds·d/2
        assert!((rep.min_increment - 1.5 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn grid_ends_at_t() {
        let g = cfg(2.0, 7, 1, 0.0).time_grid();
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 2.0);
    }
}
