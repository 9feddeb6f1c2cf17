//! Deterministic low-discrepancy points for sup and Lipschitz searches.

use alloc::vec::Vec;

use crate::math;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Van der Corput radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// The `i`-th Halton point in `[0, 1)^d` (index 0 is skipped), `d <= 8`.
pub fn halton(i: u64, d: usize) -> Vec<f64> {
    (0..d).map(|k| radical_inverse(i + 1, PRIMES[k])).collect()
}

/// `n` Halton points mapped into the closed ball `B(center, r)` by rejection
/// from the enclosing cube; the center itself is always included first.
pub fn ball_points(center: &[f64], r: f64, n: usize) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(center.to_vec());
    let mut i = 0u64;
    while out.len() < n + 1 {
        let u = halton(i, d);
        i += 1;
        let y: Vec<f64> = u.iter().map(|v| 2.0 * v - 1.0).collect();
        if math::norm_sq(&y) <= 1.0 {
            out.push(center.iter().zip(&y).map(|(c, v)| c + r * v).collect());
        }
    }
    out
}

/// `n` deterministic points on the sphere `∂B(center, r)`.
pub fn sphere_points(center: &[f64], r: f64, n: usize) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut out = Vec::with_capacity(n);
    match d {
        1 => {
            out.push(alloc::vec![center[0] - r]);
            out.push(alloc::vec![center[0] + r]);
        }
        2 => {
            for k in 0..n {
                let a = 2.0 * core::f64::consts::PI * k as f64 / n as f64;
                out.push(alloc::vec![center[0] + r * math::cos(a), center[1] + r * math::sin(a)]);
            }
        }
        _ => {
            let mut i = 0u64;
            while out.len() < n {
                let u = halton(i, d);
                i += 1;
                let y: Vec<f64> = u.iter().map(|v| 2.0 * v - 1.0).collect();
                let nn = math::norm(&y);
                if nn <= 1.0 && nn > 1e-3 {
                    out.push(center.iter().zip(&y).map(|(c, v)| c + r * v / nn).collect());
                }
            }
        }
    }
    out
}
