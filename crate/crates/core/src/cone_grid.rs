//! Partition of `R^d` (`d ∈ {2, 3}`) into narrow polyhedral cones, with the
//! tangent-plane projections and convex weights used to bound convex
//! interpolation error inside a cone.
//!
//! `d = 2`: `N` equal sectors anchored at angle 0.
//! `d = 3`: cones over the faces of a UV sphere (`n_θ` polar bands by `n_φ`
//! meridian slices); cells touching a pole are triangles whose pole edge is
//! listed twice so every cone carries four edge rays.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg;
use crate::math;
use crate::sampling;

pub const MAX_CONES: usize = 1_000_000;
/// Directions sampled per cone by [`distortion_bound`], on top of the edges
/// and the centroid.
pub const DISTORTION_SAMPLES: usize = 1000;
/// Inflation applied to the sampled distortion.
pub const DISTORTION_INFLATION: f64 = 1.01;

const MEMBERSHIP_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Sectors { n: usize },
    Uv { bands: usize, slices: usize },
}

#[derive(Debug, Clone)]
pub struct ConeGrid {
    pub d: usize,
    pub epsilon: f64,
    pub edge_directions: Vec<Vec<f64>>,
    /// Edge-ray indices of each cone in cyclic order.
    pub cones: Vec<Vec<usize>>,
    /// Inward facet normals, one per non-degenerate consecutive edge pair.
    normals: Vec<Vec<[f64; 3]>>,
    layout: Layout,
}

/// Solid angle of the spherical triangle with unit vertices `a`, `b`, `c`.
pub fn triangle_solid_angle(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let triple = math::dot(a, &cross(b, c));
    let denom = 1.0 + math::dot(a, b) + math::dot(a, c) + math::dot(b, c);
    2.0 * math::abs(math::atan2(triple, denom))
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn cross2(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn spherical(theta: f64, phi: f64) -> Vec<f64> {
    let st = math::sin(theta);
    vec![st * math::cos(phi), st * math::sin(phi), math::cos(theta)]
}

/// Builds the coarsest equal-angle grid whose cone caps all have area at
/// most `epsilon`.
pub fn build_grid(d: usize, epsilon: f64) -> Result<ConeGrid> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", "must lie in (0, 1)"));
    }
    match d {
        2 => build_sectors(epsilon),
        3 => build_uv(epsilon),
        _ => Err(invalid("d", "cone grids are implemented for d = 2 and d = 3")),
    }
}

fn build_sectors(epsilon: f64) -> Result<ConeGrid> {
    let ratio = 2.0 * PI / epsilon;
    if ratio > MAX_CONES as f64 {
        return Err(Error::ResourceLimit(format!(
            "epsilon {epsilon:e} needs more than {MAX_CONES} cones"
        )));
    }
    let n = (math::ceil(ratio - 1e-9) as usize).max(3);
    let edge_directions = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            vec![math::cos(a), math::sin(a)]
        })
        .collect();
    let cones = (0..n).map(|k| vec![k, (k + 1) % n]).collect();
    Ok(ConeGrid {
        d: 2,
        epsilon,
        edge_directions,
        cones,
        normals: Vec::new(),
        layout: Layout::Sectors { n },
    })
}

fn build_uv(epsilon: f64) -> Result<ConeGrid> {
    let mut bands = 3;
    loop {
        let slices = 2 * bands;
        if bands * slices > MAX_CONES {
            return Err(Error::ResourceLimit(format!(
                "epsilon {epsilon:e} needs more than {MAX_CONES} cones"
            )));
        }
        let grid = uv_grid(epsilon, bands, slices);
        if grid.max_cap_area() <= epsilon {
            return Ok(grid);
        }
        bands += 1;
    }
}

fn uv_grid(epsilon: f64, bands: usize, slices: usize) -> ConeGrid {
    let mut edge_directions = vec![vec![0.0, 0.0, 1.0]];
    for a in 1..bands {
        let theta = PI * a as f64 / bands as f64;
        for b in 0..slices {
            edge_directions.push(spherical(theta, 2.0 * PI * b as f64 / slices as f64));
        }
    }
    let south = edge_directions.len();
    edge_directions.push(vec![0.0, 0.0, -1.0]);
    let vertex = |a: usize, b: usize| -> usize {
        if a == 0 {
            0
        } else if a == bands {
            south
        } else {
            1 + (a - 1) * slices + b % slices
        }
    };
    let mut cones = Vec::with_capacity(bands * slices);
    let mut normals = Vec::with_capacity(bands * slices);
    for a in 0..bands {
        for b in 0..slices {
            let cone = vec![vertex(a, b), vertex(a, b + 1), vertex(a + 1, b + 1), vertex(a + 1, b)];
            let mut centroid = vec![0.0; 3];
            for &e in &cone {
                for k in 0..3 {
                    centroid[k] += edge_directions[e][k];
                }
            }
            let mut faces = Vec::with_capacity(4);
            for k in 0..4 {
                let (p, q) = (cone[k], cone[(k + 1) % 4]);
                if p == q {
                    continue;
                }
                let mut n = cross(&edge_directions[p], &edge_directions[q]);
                if math::dot(&n, &centroid) < 0.0 {
                    n = math::scale(&n, -1.0);
                }
                let len = math::norm(&n);
                faces.push([n[0] / len, n[1] / len, n[2] / len]);
            }
            cones.push(cone);
            normals.push(faces);
        }
    }
    ConeGrid {
        d: 3,
        epsilon,
        edge_directions,
        cones,
        normals,
        layout: Layout::Uv { bands, slices },
    }
}

impl ConeGrid {
    /// Number of cones `N`.
    pub fn len(&self) -> usize {
        self.cones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cones.is_empty()
    }

    /// Exact area of the unit-sphere cap cut out by cone `i`.
    pub fn cap_area(&self, i: usize) -> f64 {
        let c = &self.cones[i];
        let e = |k: usize| self.edge_directions[c[k]].as_slice();
        match self.layout {
            Layout::Sectors { .. } => math::acos(math::dot(e(0), e(1)).clamp(-1.0, 1.0)),
            Layout::Uv { .. } => {
                let mut area = 0.0;
                if c[0] != c[1] {
                    area += triangle_solid_angle(e(0), e(1), e(2));
                }
                if c[2] != c[3] {
                    area += triangle_solid_angle(e(0), e(2), e(3));
                }
                area
            }
        }
    }

    pub fn max_cap_area(&self) -> f64 {
        (0..self.len()).map(|i| self.cap_area(i)).fold(0.0, f64::max)
    }

    /// Signed distance-like margin of `y` inside cone `i`; `≥ 0` means inside.
    fn margin(&self, i: usize, y: &[f64]) -> f64 {
        match self.layout {
            Layout::Sectors { .. } => {
                let c = &self.cones[i];
                let lo = cross2(&self.edge_directions[c[0]], y);
                let hi = cross2(y, &self.edge_directions[c[1]]);
                lo.min(hi)
            }
            Layout::Uv { .. } => self.normals[i]
                .iter()
                .map(|n| n[0] * y[0] + n[1] * y[1] + n[2] * y[2])
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Whether `y` lies in cone `i`, up to a relative tolerance.
    pub fn contains(&self, i: usize, y: &[f64]) -> bool {
        self.margin(i, y) >= -MEMBERSHIP_TOL * math::norm(y)
    }

    fn candidates(&self, y: &[f64]) -> Vec<usize> {
        match self.layout {
            Layout::Sectors { n } => {
                let mut angle = math::atan2(y[1], y[0]);
                if angle < 0.0 {
                    angle += 2.0 * PI;
                }
                let k = (math::floor(angle * n as f64 / (2.0 * PI)) as usize).min(n - 1);
                vec![(k + n - 1) % n, k, (k + 1) % n]
            }
            Layout::Uv { bands, slices } => {
                let r = math::norm(y);
                let theta = math::acos((y[2] / r).clamp(-1.0, 1.0));
                let mut phi = math::atan2(y[1], y[0]);
                if phi < 0.0 {
                    phi += 2.0 * PI;
                }
                let a = (math::floor(theta * bands as f64 / PI) as usize).min(bands - 1);
                let b = (math::floor(phi * slices as f64 / (2.0 * PI)) as usize).min(slices - 1);
                let mut out = Vec::with_capacity(9);
                for da in [-1i64, 0, 1] {
                    let aa = a as i64 + da;
                    if aa < 0 || aa >= bands as i64 {
                        continue;
                    }
                    for db in [slices - 1, 0, 1] {
                        out.push(aa as usize * slices + (b + db) % slices);
                    }
                }
                out
            }
        }
    }

    /// Index of the cone containing `y`; on shared boundaries the lowest
    /// index wins.
    pub fn locate_cone(&self, y: &[f64]) -> Result<usize> {
        check_dim(self.d, y.len())?;
        if !math::all_finite(y) || math::norm_sq(y) == 0.0 {
            return Err(invalid("y", "direction must be finite and nonzero"));
        }
        let cands = self.candidates(y);
        if let Some(&i) = cands.iter().filter(|&&i| self.contains(i, y)).min() {
            return Ok(i);
        }
        // rounding gap between neighbouring facets: take the least violated
        let mut best = cands[0];
        for &i in &cands[1..] {
            let (m, mb) = (self.margin(i, y), self.margin(best, y));
            if m > mb || (m == mb && i < best) {
                best = i;
            }
        }
        Ok(best)
    }

    fn check_member(&self, i: usize, y: &[f64]) -> Result<()> {
        check_dim(self.d, y.len())?;
        if i >= self.len() {
            return Err(invalid("i", format!("cone index {i} out of range 0..{}", self.len())));
        }
        if math::norm_sq(y) == 0.0 {
            return Err(invalid("y", "direction must be nonzero"));
        }
        if !self.contains(i, y) {
            return Err(Error::Precondition(format!("y is not in cone {i}")));
        }
        Ok(())
    }

    /// `T^i_j(y) = (‖y‖² / ⟨e_j, y⟩) e_j` for each edge ray `e_j` of cone `i`:
    /// where the ray meets the plane through `y` orthogonal to `y`.
    pub fn tangent_projections(&self, i: usize, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_member(i, y)?;
        let r2 = math::norm_sq(y);
        self.cones[i]
            .iter()
            .map(|&j| {
                let e = &self.edge_directions[j];
                let c = math::dot(e, y);
                if !(c > 0.0) {
                    return Err(Error::Geometry(format!(
                        "edge {j} of cone {i} is not within a right angle of y"
                    )));
                }
                Ok(math::scale(e, r2 / c))
            })
            .collect()
    }

    /// Convex weights `α` with `Σ α_j T^i_j(y) = y`.
    pub fn barycentric_weights(&self, i: usize, y: &[f64]) -> Result<Vec<f64>> {
        let t = self.tangent_projections(i, y)?;
        let alpha = match self.layout {
            Layout::Sectors { .. } => {
                let dir = math::sub(&t[1], &t[0]);
                let a1 = math::dot(&math::sub(y, &t[0]), &dir) / math::norm_sq(&dir);
                vec![1.0 - a1, a1]
            }
            Layout::Uv { .. } => {
                let cone = &self.cones[i];
                let mut first = Vec::new();
                let mut shifted = Vec::new();
                for (k, &e) in cone.iter().enumerate() {
                    if cone[..k].contains(&e) {
                        continue;
                    }
                    first.push(k);
                    shifted.push(math::sub(&t[k], y));
                }
                let hull = linalg::min_norm_in_hull(&shifted)?;
                let mut alpha = vec![0.0; cone.len()];
                for (k, w) in first.iter().zip(hull.weights) {
                    alpha[*k] = w;
                }
                alpha
            }
        };
        if alpha.iter().any(|&a| a < -1e-9) {
            return Err(Error::Geometry(format!("negative weight {alpha:?} in cone {i}")));
        }
        let alpha: Vec<f64> = alpha.into_iter().map(|a| a.max(0.0)).collect();
        let mut recon = vec![0.0; self.d];
        for (a, tj) in alpha.iter().zip(&t) {
            for k in 0..self.d {
                recon[k] += a * tj[k];
            }
        }
        let err = math::dist(&recon, y);
        if err > 1e-10 * math::norm(y) {
            return Err(Error::Geometry(format!(
                "reconstruction error {err:e} in cone {i}"
            )));
        }
        Ok(alpha)
    }

    /// Deterministic unit directions in cone `i`: its edges, the normalised
    /// centroid, and `count` normalised convex combinations of the edges.
    pub fn sample_directions(&self, i: usize, count: usize) -> Vec<Vec<f64>> {
        let cone = &self.cones[i];
        let edges: Vec<&Vec<f64>> = cone.iter().map(|&j| &self.edge_directions[j]).collect();
        let mut out: Vec<Vec<f64>> = edges.iter().map(|e| e.to_vec()).collect();
        let normalise = |v: Vec<f64>| {
            let n = math::norm(&v);
            math::scale(&v, 1.0 / n)
        };
        let mut centroid = vec![0.0; self.d];
        for e in &edges {
            for k in 0..self.d {
                centroid[k] += e[k];
            }
        }
        out.push(normalise(centroid));
        for s in 0..count as u64 {
            let v = match self.layout {
                Layout::Sectors { .. } => {
                    let u = (s as f64 + 0.5) / count as f64;
                    let a = math::acos(math::dot(edges[0], edges[1]).clamp(-1.0, 1.0));
                    let e0 = edges[0];
                    let base = math::atan2(e0[1], e0[0]);
                    vec![math::cos(base + u * a), math::sin(base + u * a)]
                }
                Layout::Uv { .. } => {
                    let h = sampling::halton(s + 1, 2);
                    let (u, w) = (h[0], h[1]);
                    let mut v = vec![0.0; 3];
                    for k in 0..3 {
                        let top = (1.0 - u) * edges[0][k] + u * edges[1][k];
                        let bottom = (1.0 - u) * edges[3][k] + u * edges[2][k];
                        v[k] = (1.0 - w) * top + w * bottom;
                    }
                    normalise(v)
                }
            };
            out.push(v);
        }
        out
    }
}

/// Sampled distortion of the tangent projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    /// `DISTORTION_INFLATION · max(cond1, cond2)`.
    pub a: f64,
    /// `max ‖T^i_j(y)‖ / ‖y‖ − 1`.
    pub cond1: f64,
    /// `max |⟨Q T, T⟩ − ⟨Q y, y⟩| / ⟨Q y, y⟩`.
    pub cond2: f64,
}

/// Smallest `a` (sampled, then inflated) with `‖T^i_j(y)‖ ≤ (1 + a)‖y‖`
/// and `|⟨Q T^i_j(y), T^i_j(y)⟩ − ⟨Q y, y⟩| ≤ a ⟨Q y, y⟩` over every cone.
///
/// `Q ⪰ I` is required; shift `f` by `½‖x‖²` beforehand if needed.
pub fn distortion_bound(grid: &ConeGrid, q: &DMatrix<f64>) -> Result<Distortion> {
    if q.nrows() != grid.d || q.ncols() != grid.d {
        return Err(Error::DimensionMismatch {
            expected: grid.d,
            got: q.nrows(),
        });
    }
    let lo = linalg::min_eigenvalue(&linalg::symmetrize(q));
    if lo < 1.0 - linalg::PSD_TOL {
        return Err(Error::Precondition(format!("Q must dominate I, min eigenvalue {lo}")));
    }
    let mut cond1 = 0.0f64;
    let mut cond2 = 0.0f64;
    for i in 0..grid.len() {
        for y in grid.sample_directions(i, DISTORTION_SAMPLES) {
            let qy = linalg::quad_form(q, &y);
            for tj in grid.tangent_projections(i, &y)? {
                cond1 = cond1.max(math::norm(&tj) - 1.0);
                cond2 = cond2.max(math::abs(linalg::quad_form(q, &tj) - qy) / qy);
            }
        }
    }
    Ok(Distortion {
        a: DISTORTION_INFLATION * cond1.max(cond2),
        cond1,
        cond2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::{batch_rng, fill_normals};
    use rand_chacha::ChaCha8Rng;

    fn random_dir(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let mut z = vec![0.0; d];
        fill_normals(rng, &mut z);
        z
    }

    #[test]
    fn pi_over_eight_gives_sixteen_sectors() {
        let g = build_grid(2, PI / 8.0).unwrap();
        assert_eq!(g.len(), 16);
        let total: f64 = (0..g.len()).map(|i| g.cap_area(i)).sum();
        assert!((total - 2.0 * PI).abs() < 1e-12);
        assert_eq!(g.locate_cone(&[1.0, 0.01]).unwrap(), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_grid(4, 0.5).is_err());
        assert!(build_grid(2, 1.5).is_err());
        assert!(matches!(build_grid(2, 1e-6), Err(Error::ResourceLimit(_))));
        let g = build_grid(2, 0.5).unwrap();
        assert!(g.locate_cone(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn shared_edge_goes_to_lowest_index() {
        let g = build_grid(2, PI / 8.0).unwrap();
        let e3 = g.edge_directions[3].clone();
        assert_eq!(g.locate_cone(&e3).unwrap(), 2);
        let e0 = g.edge_directions[0].clone();
        assert_eq!(g.locate_cone(&e0).unwrap(), 0);
        assert_eq!(g.locate_cone(&[0.3, 0.4]).unwrap(), g.locate_cone(&[0.6, 0.8]).unwrap());
    }

    #[test]
    fn symmetric_sector_projections_and_weights() {
        let g = build_grid(2, PI / 8.0).unwrap();
        let half = PI / 16.0;
        let y = [half.cos(), half.sin()];
        let t = g.tangent_projections(0, &y).unwrap();
        for tj in &t {
            assert!((math::norm(tj) - 1.0 / half.cos()).abs() < 1e-14);
        }
        let a = g.barycentric_weights(0, &y).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-12 && (a[1] - 0.5).abs() < 1e-12);
        let t2 = g.tangent_projections(0, &[2.0 * y[0], 2.0 * y[1]]).unwrap();
        for (u, v) in t.iter().zip(&t2) {
            assert!((2.0 * u[0] - v[0]).abs() < 1e-14 && (2.0 * u[1] - v[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn edge_point_projects_to_itself() {
        let g = build_grid(3, 0.5).unwrap();
        for i in [0, 7, g.len() / 2] {
            let j = g.cones[i][2];
            let y = math::scale(&g.edge_directions[j], 1.7);
            let t = g.tangent_projections(i, &y).unwrap();
            assert!(math::dist(&t[2], &y) < 1e-12);
            let a = g.barycentric_weights(i, &y).unwrap();
            assert!((a[2] - 1.0).abs() < 1e-9, "{a:?}");
        }
    }

    #[test]
    fn uv_caps_tile_the_sphere() {
        let g = build_grid(3, 0.5).unwrap();
        let total: f64 = (0..g.len()).map(|i| g.cap_area(i)).sum();
        assert!((total - 4.0 * PI).abs() < 1e-10, "{total}");
        assert!(g.max_cap_area() <= 0.5);
        for c in &g.cones {
            assert_eq!(c.len(), 4);
        }
    }

    #[test]
    fn random_directions_locate_and_decompose_in_3d() {
        let g = build_grid(3, 0.3).unwrap();
        let mut rng = batch_rng(11, 0);
        for _ in 0..2000 {
            let y = random_dir(&mut rng, 3);
            let i = g.locate_cone(&y).unwrap();
            let a = g.barycentric_weights(i, &y).unwrap();
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distortion_matches_sector_geometry() {
        let g = build_grid(2, 0.25).unwrap();
        let dist = distortion_bound(&g, &DMatrix::identity(2, 2)).unwrap();
        let exact = 1.0 / (2.0 * PI / g.len() as f64).cos() - 1.0;
        assert!((dist.cond1 - exact).abs() < 1e-12 * (1.0 + exact));
        assert!((dist.cond2 - (2.0 * exact + exact * exact)).abs() < 1e-12);
        assert!(distortion_bound(&g, &(DMatrix::identity(2, 2) * 0.5)).is_err());
    }

    #[test]
    fn weights_near_a_cell_diagonal_reconstruct_exactly() {
        let g = build_grid(3, 0.0625).unwrap();
        let y = [-0.8148832989162014, -0.27847468997385316, -0.18647123086268533];
        let i = g.locate_cone(&y).unwrap();
        let w = g.barycentric_weights(i, &y).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
