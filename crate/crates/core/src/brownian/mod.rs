//! Seeded Gaussian sampling and batched Monte-Carlo expectations.
//!
//! Every estimate is split into fixed-size batches. Batch `b` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `b`, accumulates its own
//! Welford state, and batch states are merged in index order. The result is
//! therefore a function of `(seed, n, batch_size)` only, independent of how
//! an [`Executor`] schedules the batches.

mod compensator;

pub use compensator::{
    compensator_monotonicity_check, compensator_path_estimate, MonotonicityReport, PathConfig,
};

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::math;

pub const DEFAULT_BATCH_SIZE: usize = 8192;

/// Runs independent jobs, returning results in job-index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

impl<E: Executor> Executor for &E {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (**self).map(count, f)
    }
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

/// Monte-Carlo result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub stderr: f64,
    pub n: usize,
    /// Brownian time the functional was evaluated at.
    pub t: f64,
    pub seed: u64,
}

impl MCEstimate {
    /// `|mean - target| <= k * stderr + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        math::abs(self.mean - target) <= k * self.stderr + slack
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let na = self.count as f64;
        let nb = other.count as f64;
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            math::sqrt(self.variance() / self.count as f64)
        }
    }

    pub fn estimate(&self, t: f64, seed: u64) -> MCEstimate {
        MCEstimate {
            mean: self.mean,
            stderr: self.stderr(),
            n: self.count as usize,
            t,
            seed,
        }
    }
}

/// Sample count, seed and partitioning of a Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct MonteCarlo<E = Sequential> {
    pub n: usize,
    pub seed: u64,
    /// Average each draw `z` with its mirror `-z`; `n` counts pairs.
    pub antithetic: bool,
    pub batch_size: usize,
    pub executor: E,
}

impl MonteCarlo<Sequential> {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            antithetic: false,
            batch_size: DEFAULT_BATCH_SIZE,
            executor: Sequential,
        }
    }
}

impl<E: Executor> MonteCarlo<E> {
    pub fn with_executor<F: Executor>(self, executor: F) -> MonteCarlo<F> {
        MonteCarlo {
            n: self.n,
            seed: self.seed,
            antithetic: self.antithetic,
            batch_size: self.batch_size,
            executor,
        }
    }

    pub fn antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn batch_count(&self) -> usize {
        self.n.div_ceil(self.batch_size.max(1))
    }

    /// Estimates the means of `outputs` functionals of a standard normal
    /// vector of length `normals`, sharing each draw across all outputs.
    ///
    /// `make_kernel` is called once per batch; the kernel it returns maps a
    /// draw `z` to the output values and may keep scratch buffers.
    pub fn run<M, K>(&self, normals: usize, outputs: usize, make_kernel: M) -> Result<Vec<Accumulator>>
    where
        M: Fn() -> K + Sync + Send,
        K: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        let batches = self.batch_count();
        let results = self.executor.map(batches, |b| {
            let count = self.batch_size.min(self.n - b * self.batch_size);
            self.run_batch(b, count, normals, outputs, &make_kernel)
        });
        let mut total = vec![Accumulator::default(); outputs];
        for r in results {
            let accs = r?;
            for (t, a) in total.iter_mut().zip(&accs) {
                t.merge(a);
            }
        }
        Ok(total)
    }

    fn run_batch<M, K>(
        &self,
        batch: usize,
        count: usize,
        normals: usize,
        outputs: usize,
        make_kernel: &M,
    ) -> Result<Vec<Accumulator>>
    where
        M: Fn() -> K,
        K: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let mut rng = batch_rng(self.seed, batch);
        let mut kernel = make_kernel();
        let mut z = vec![0.0; normals];
        let mut out = vec![0.0; outputs];
        let mut mirror = vec![0.0; outputs];
        let mut accs = vec![Accumulator::default(); outputs];
        for _ in 0..count {
            fill_normals(&mut rng, &mut z);
            kernel(&z, &mut out)?;
            if self.antithetic {
                for v in z.iter_mut() {
                    *v = -*v;
                }
                kernel(&z, &mut mirror)?;
                for (o, m) in out.iter_mut().zip(&mirror) {
                    *o = 0.5 * (*o + m);
                }
            }
            for (acc, &v) in accs.iter_mut().zip(out.iter()) {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "monte carlo kernel",
                        value: v,
                        sample: z.clone(),
                    });
                }
                acc.push(v);
            }
        }
        Ok(accs)
    }
}

/// Generator for batch `batch` of a run seeded with `seed`.
pub fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

pub fn fill_normals(rng: &mut ChaCha8Rng, z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// `n` i.i.d. `N(0, t I_d)` vectors, drawn batch by batch exactly as
/// [`MonteCarlo::run`] draws them with the default batch size.
pub fn sample_increments(d: usize, t: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", "must be finite and > 0"));
    }
    let sd = math::sqrt(t);
    let mut out = Vec::with_capacity(n);
    let mut b = 0;
    while out.len() < n {
        let mut rng = batch_rng(seed, b);
        let count = DEFAULT_BATCH_SIZE.min(n - out.len());
        for _ in 0..count {
            let mut z = vec![0.0; d];
            fill_normals(&mut rng, &mut z);
            for v in &mut z {
                *v *= sd;
            }
            out.push(z);
        }
        b += 1;
    }
    Ok(out)
}

/// Monte-Carlo estimate of `E[g(W_t)]` for `W_t ~ N(0, t I_d)`.
///
/// A non-finite `g` value aborts with the offending `W_t` sample.
pub fn expect<E, G>(mc: &MonteCarlo<E>, d: usize, t: f64, g: G) -> Result<MCEstimate>
where
    E: Executor,
    G: Fn(&[f64]) -> f64 + Sync + Send,
{
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", "must be finite and > 0"));
    }
    let sd = math::sqrt(t);
    let accs = mc.run(d, 1, || {
        let mut w = vec![0.0; d];
        let g = &g;
        move |z: &[f64], out: &mut [f64]| {
            for (wi, zi) in w.iter_mut().zip(z) {
                *wi = sd * zi;
            }
            let v = g(&w);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "expect",
                    value: v,
                    sample: w.clone(),
                });
            }
            out[0] = v;
            Ok(())
        }
    })?;
    Ok(accs[0].estimate(t, mc.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_merge_matches_single_pass() {
        let data: Vec<f64> = (0..1000).map(|i| math::sin(i as f64) * 3.0 + 1.0).collect();
        let mut whole = Accumulator::default();
        for &v in &data {
            whole.push(v);
        }
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        for &v in &data[..377] {
            a.push(v);
        }
        for &v in &data[377..] {
            b.push(v);
        }
        a.merge(&b);
        assert!((a.mean - whole.mean).abs() < 1e-14);
        assert!((a.variance() - whole.variance()).abs() < 1e-12);
    }

    #[test]
    fn second_moment_in_three_dimensions() {
        let mc = MonteCarlo::new(200_000, 11);
        let est = expect(&mc, 3, 2.0, math::norm_sq).unwrap();
        assert!(est.within(6.0, 3.0, 0.0), "{est:?}");
    }

    #[test]
    fn linear_functional_has_zero_mean() {
        let mc = MonteCarlo::new(100_000, 5);
        let est = expect(&mc, 2, 0.3, |w| 2.0 * w[0] - 0.5 * w[1]).unwrap();
        assert!(est.within(0.0, 3.0, 0.0), "{est:?}");
        // antithetic pairs cancel a linear functional exactly
        let anti = expect(&mc.clone().antithetic(true), 2, 0.3, |w| 2.0 * w[0] - 0.5 * w[1]).unwrap();
        assert_eq!(anti.mean, 0.0);
    }

    #[test]
    fn folded_gaussian_near_kink() {
        let t = 0.01;
        let st = math::sqrt(t);
        let exact = 2.0 * (st * math::normal_pdf(1.0 / st) - math::normal_cdf(-1.0 / st));
        let est = expect(&MonteCarlo::new(100_000, 3), 1, t, |w| (1.0 + w[0]).abs() - 1.0).unwrap();
        assert!(est.within(exact, 3.0, 0.0), "{est:?} vs {exact}");
    }

    #[test]
    fn non_finite_functional_aborts_with_sample() {
        let err = expect(&MonteCarlo::new(10, 1), 1, 1.0, |w| if w[0] > -100.0 { f64::NAN } else { 0.0 })
            .unwrap_err();
        match err {
            Error::NonFinite { sample, .. } => assert_eq!(sample.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn increments_are_reproducible_and_empty_batch_is_valid() {
        let a = sample_increments(2, 1.0, 20_000, 9).unwrap();
        let b = sample_increments(2, 1.0, 20_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(sample_increments(2, 1.0, 0, 9).unwrap().is_empty());
    }

    #[test]
    fn batch_partition_changes_nothing_within_a_batch_size() {
        // the same batch size gives identical results regardless of scheduling
        struct Reversed;
        impl Executor for Reversed {
            fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, count: usize, f: F) -> Vec<T> {
                let mut v: Vec<(usize, T)> = (0..count).rev().map(|i| (i, f(i))).collect();
                v.sort_by_key(|p| p.0);
                v.into_iter().map(|p| p.1).collect()
            }
        }
        let mc = MonteCarlo::new(50_000, 4);
        let a = expect(&mc, 1, 1.0, |w| w[0] * w[0]).unwrap();
        let b = expect(&mc.clone().with_executor(Reversed), 1, 1.0, |w| w[0] * w[0]).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}
