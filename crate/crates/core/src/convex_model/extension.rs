use alloc::vec::Vec;

use super::{ConvexFunction, Growth, SharedFunction};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::sampling;

pub const DEFAULT_EXTENSION_GRID: usize = 1000;

/// Convex extension of a function known on the closed unit ball.
///
/// Outside the ball the value at `z` is the supremum over chords `x, y` in
/// the ball, collinear with `z` and ordered `x, y, z`, of the chord line
/// evaluated at `z`. On a fixed line the chord slope grows as `x` and `y`
/// approach the point `q` where the line leaves the ball, so the supremum
/// is `f(q) + f'(q; z − q)` over the part of the sphere visible from `z`.
/// The one-sided derivative is a chord slope, Richardson-extrapolated where
/// no kink lies inside the chord; the visible cap is searched on a grid of
/// about `grid` points and the best cell refined. Implemented for `d ≤ 3`.
#[derive(Clone)]
pub struct BallExtension {
    inner: SharedFunction,
    grid: usize,
    growth: Growth,
}

impl core::fmt::Debug for BallExtension {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BallExtension")
            .field("grid", &self.grid)
            .field("growth", &self.growth)
            .finish_non_exhaustive()
    }
}

pub fn extend_from_ball(f: SharedFunction, grid: usize) -> Result<BallExtension> {
    if grid < 2 {
        return Err(invalid("grid", "extension grid needs at least 2 points"));
    }
    let mut ext = BallExtension {
        inner: f,
        grid,
        growth: Growth {
            a: 0.0,
            b: 0.0,
            degree: 1,
        },
    };
    ext.growth = ext.estimate_growth();
    Ok(ext)
}

impl BallExtension {
    pub fn try_eval(&self, z: &[f64]) -> Result<f64> {
        let rho = math::norm(z);
        if !rho.is_finite() {
            return Err(Error::Domain("extension point must be finite".into()));
        }
        if rho <= 1.0 {
            return Ok(self.inner.eval(z));
        }
        let u = math::scale(z, 1.0 / rho);
        let half = math::acos(1.0 / rho);
        match z.len() {
            1 => Ok(self.tangent_value(&u, z)),
            2 => {
                let base = math::atan2(u[1], u[0]);
                let at = |a: f64| self.tangent_value(&[math::cos(a), math::sin(a)], z);
                let n = self.grid.max(2);
                let step = 2.0 * half / (n - 1) as f64;
                let mut best = (f64::NEG_INFINITY, base);
                for k in 0..n {
                    let a = base - half + step * k as f64;
                    let v = at(a);
                    if v > best.0 {
                        best = (v, a);
                    }
                }
                Ok(golden_max(&at, best.1 - step, best.1 + step, best.0))
            }
            3 => {
                let (e1, e2) = orthonormal_complement(&u);
                let q = |a: f64, b: f64| -> Vec<f64> {
                    let (sa, ca) = (math::sin(a), math::cos(a));
                    let (sb, cb) = (math::sin(b), math::cos(b));
                    (0..3).map(|k| ca * u[k] + sa * (cb * e1[k] + sb * e2[k])).collect()
                };
                let at = |a: f64, b: f64| self.tangent_value(&q(a, b), z);
                let m = (math::ceil(math::sqrt(self.grid as f64)) as usize).max(2);
                let (da, db) = (half / (m - 1) as f64, 2.0 * core::f64::consts::PI / m as f64);
                let mut best = (at(0.0, 0.0), 0.0, 0.0);
                for i in 1..m {
                    for j in 0..m {
                        let (a, b) = (da * i as f64, db * j as f64);
                        let v = at(a, b);
                        if v > best.0 {
                            best = (v, a, b);
                        }
                    }
                }
                let (mut v, mut a, mut b) = best;
                let (mut sa, mut sb) = (da, db);
                while sa > 1e-12 {
                    let mut moved = false;
                    for (na, nb) in [(a + sa, b), (a - sa, b), (a, b + sb), (a, b - sb)] {
                        let na = na.clamp(0.0, half);
                        let w = at(na, nb);
                        if w > v {
                            (v, a, b, moved) = (w, na, nb, true);
                        }
                    }
                    if !moved {
                        sa *= 0.5;
                        sb *= 0.5;
                    }
                }
                Ok(v)
            }
            _ => Err(Error::Domain("ball extension is implemented for d <= 3".into())),
        }
    }

    /// `f(q) + f'(q; z − q)` for a sphere point `q` visible from `z`, or
    /// `-∞` when the chord behind `q` would leave the ball.
    fn tangent_value(&self, q: &[f64], z: &[f64]) -> f64 {
        let diff = math::sub(z, q);
        let len = math::norm(&diff);
        let dir = math::scale(&diff, 1.0 / len);
        let h = 1e-5;
        if math::dot(q, &dir) * 2.0 < h {
            return f64::NEG_INFINITY;
        }
        let fq = self.inner.eval(q);
        let slope = |s: f64| {
            let x: Vec<f64> = q.iter().zip(&dir).map(|(a, b)| a - s * b).collect();
            (fq - self.inner.eval(&x)) / s
        };
        let (coarse, fine) = (slope(h), slope(0.5 * h));
        // a kink inside the chord makes the extrapolation overshoot; the
        // chord slope itself never exceeds the one-sided derivative
        let d = if fine - coarse <= 1e-4 * (1.0 + math::abs(fine)) {
            2.0 * fine - coarse
        } else {
            fine
        };
        fq + len * d
    }

    fn estimate_growth(&self) -> Growth {
        let d = self.inner.dim();
        let origin = alloc::vec![0.0; d];
        let mut sup = 0.0f64;
        for p in sampling::ball_points(&origin, 1.0, 2000) {
            sup = sup.max(math::abs(self.inner.eval(&p)));
        }
        let dirs = sampling::sphere_points(&origin, 1.0, 256);
        let mut slope = 0.0f64;
        for u in &dirs {
            let on = self.try_eval(u).unwrap_or(0.0);
            let out = self.try_eval(&math::scale(u, 2.0)).unwrap_or(0.0);
            sup = sup.max(math::abs(on));
            slope = slope.max(math::abs(out - on));
        }
        // |F(ρu)| <= sup + (ρ - 1)·slope on the ray, slope fixed beyond the ball
        Growth {
            a: 1.01 * slope + 1e-12,
            b: 1.01 * sup + 1e-12,
            degree: 1,
        }
    }
}

impl ConvexFunction for BallExtension {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, z: &[f64]) -> f64 {
        self.try_eval(z).unwrap_or(f64::NAN)
    }

    fn subgradient(&self, z: &[f64]) -> Vec<f64> {
        if math::norm(z) < 1.0 {
            return self.inner.subgradient(z);
        }
        let h = 1e-6;
        let mut y = z.to_vec();
        (0..z.len())
            .map(|i| {
                y[i] = z[i] + h;
                let up = self.eval(&y);
                y[i] = z[i] - h;
                let down = self.eval(&y);
                y[i] = z[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn growth(&self) -> Growth {
        self.growth
    }
}

fn golden_max(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, start: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_8;
    let mut a = hi - R * (hi - lo);
    let mut b = lo + R * (hi - lo);
    let (mut ga, mut gb) = (g(a), g(b));
    for _ in 0..80 {
        if ga < gb {
            lo = a;
            a = b;
            ga = gb;
            b = lo + R * (hi - lo);
            gb = g(b);
        } else {
            hi = b;
            b = a;
            gb = ga;
            a = hi - R * (hi - lo);
            ga = g(a);
        }
    }
    start.max(ga).max(gb)
}

/// Two unit vectors completing `u` to an orthonormal basis of `R^3`.
fn orthonormal_complement(u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pick = if math::abs(u[0]) < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let proj = math::dot(&pick, u);
    let e1: Vec<f64> = (0..3).map(|k| pick[k] - proj * u[k]).collect();
    let e1 = math::scale(&e1, 1.0 / math::norm(&e1));
    let e2 = alloc::vec![
        u[1] * e1[2] - u[2] * e1[1],
        u[2] * e1[0] - u[0] * e1[2],
        u[0] * e1[1] - u[1] * e1[0],
    ];
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_model::{make_corpus_function, CorpusSpec, Piece};
    use alloc::sync::Arc;
    use alloc::vec;

    #[test]
    fn square_extends_to_tangent_line() {
        let sq = CorpusSpec::Quadratic {
            a: vec![vec![2.0]],
            b: vec![0.0],
            c: 0.0,
        };
        let ext = extend_from_ball(Arc::new(make_corpus_function(&sq).unwrap()), 1000).unwrap();
        assert!((ext.eval(&[2.0]) - 3.0).abs() < 1e-9);
        assert!((ext.eval(&[-3.0]) - 5.0).abs() < 1e-9);
        assert_eq!(ext.eval(&[0.5]), 0.25);
    }

    #[test]
    fn affine_is_its_own_extension() {
        let aff = CorpusSpec::MaxAffine {
            slopes: vec![vec![0.5, -2.0]],
            offsets: vec![1.0],
        };
        let ext = extend_from_ball(Arc::new(make_corpus_function(&aff).unwrap()), 1000).unwrap();
        for z in [[3.0, 1.0], [-2.0, 5.0], [0.1, 0.2]] {
            let exact = 0.5 * z[0] - 2.0 * z[1] + 1.0;
            assert!((ext.eval(&z) - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn kink_on_the_sphere_does_not_inflate_the_extension() {
        let spec = CorpusSpec::SumOfPieces {
            dim: 2,
            pieces: vec![
                Piece { coords: vec![0], spec: CorpusSpec::AbsNorm { dim: 1 } },
                Piece { coords: vec![1], spec: CorpusSpec::half_norm_sq(1) },
            ],
        };
        let ext = extend_from_ball(Arc::new(make_corpus_function(&spec).unwrap()), 1000).unwrap();
        // visible cap is on the x₁ < 0 side, so F(z) = max over a of
        // -z₁ + |z₂| sin a − ½ sin² a, attained at the kink (0, -1)
        let z = [-1.4924730769499268, -1.1697391927949334];
        let exact = -z[0] - z[1] - 0.5;
        assert!((ext.eval(&z) - exact).abs() < 1e-6, "{} vs {exact}", ext.eval(&z));
        let (x, y) = ([-2.439788365355648, -0.7853033728048586], [-0.071500144341345, -1.7463929227800457]);
        let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
        assert!(ext.eval(&mid) <= 0.5 * (ext.eval(&x) + ext.eval(&y)) + 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = Arc::new(make_corpus_function(&CorpusSpec::Power4).unwrap());
        assert!(extend_from_ball(f.clone(), 0).is_err());
        let ext = extend_from_ball(f, 100).unwrap();
        assert!(ext.try_eval(&[f64::INFINITY]).is_err());
    }
}
