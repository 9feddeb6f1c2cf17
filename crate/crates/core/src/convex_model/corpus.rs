//! Closed-form corpus of convex functions.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::measure::{Atom, SecondDerivativeMeasure};
use super::{ConvexFunction, Growth};
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;

/// Maximum number of affine pieces in a max-affine descriptor.
pub const MAX_AFFINE_PIECES: usize = 20;

/// Declarative description of a corpus function.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSpec {
    /// `½⟨Ax, x⟩ + ⟨b, x⟩ + c`; `a` is given row by row.
    Quadratic { a: Vec<Vec<f64>>, b: Vec<f64>, c: f64 },
    /// Euclidean norm `‖x‖` (`|x|` in one dimension).
    AbsNorm { dim: usize },
    /// `max_i ⟨m_i, x⟩ + c_i`.
    MaxAffine { slopes: Vec<Vec<f64>>, offsets: Vec<f64> },
    /// `x⁴` in one variable.
    Power4,
    /// `Σ_k f_k(x[coords_k])` over disjoint coordinate sets.
    SumOfPieces { dim: usize, pieces: Vec<Piece> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub coords: Vec<usize>,
    pub spec: CorpusSpec,
}

impl CorpusSpec {
    pub fn dim(&self) -> usize {
        match self {
            CorpusSpec::Quadratic { b, .. } => b.len(),
            CorpusSpec::AbsNorm { dim } => *dim,
            CorpusSpec::MaxAffine { slopes, .. } => slopes.first().map_or(0, Vec::len),
            CorpusSpec::Power4 => 1,
            CorpusSpec::SumOfPieces { dim, .. } => *dim,
        }
    }

    pub fn quadratic(a: &DMatrix<f64>, b: &[f64], c: f64) -> Self {
        CorpusSpec::Quadratic {
            a: (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
                .collect(),
            b: b.to_vec(),
            c,
        }
    }

    /// `½‖x‖²` in `dim` dimensions.
    pub fn half_norm_sq(dim: usize) -> Self {
        Self::quadratic(&DMatrix::identity(dim, dim), &vec![0.0; dim], 0.0)
    }
}

/// A validated corpus function.
#[derive(Debug, Clone)]
pub struct CorpusFunction {
    spec: CorpusSpec,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Quadratic {
        a: DMatrix<f64>,
        b: Vec<f64>,
        c: f64,
    },
    Abs {
        dim: usize,
    },
    MaxAffine {
        slopes: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        envelope: Option<Envelope>,
    },
    Power4,
    Sum {
        dim: usize,
        pieces: Vec<(Vec<usize>, CorpusFunction)>,
    },
}

/// Upper envelope of lines in one variable, written as
/// `base_slope·x + base_offset + Σ jump·(x − kink)⁺`.
#[derive(Debug, Clone)]
struct Envelope {
    base_slope: f64,
    base_offset: f64,
    kinks: Vec<(f64, f64)>,
}

impl Envelope {
    fn new(slopes: &[f64], offsets: &[f64]) -> Self {
        let mut lines: Vec<(f64, f64)> = slopes.iter().copied().zip(offsets.iter().copied()).collect();
        lines.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap().then(q.1.partial_cmp(&p.1).unwrap()));
        lines.dedup_by(|later, earlier| later.0 == earlier.0);
        let cross = |l: (f64, f64), r: (f64, f64)| (l.1 - r.1) / (r.0 - l.0);
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
        for line in lines {
            while hull.len() >= 2 {
                let n = hull.len();
                if cross(hull[n - 2], hull[n - 1]) >= cross(hull[n - 1], line) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(line);
        }
        let kinks = hull
            .windows(2)
            .map(|w| (cross(w[0], w[1]), w[1].0 - w[0].0))
            .collect();
        Envelope {
            base_slope: hull[0].0,
            base_offset: hull[0].1,
            kinks,
        }
    }

    fn smoothed_value(&self, x: f64, eps: f64) -> f64 {
        let mut v = self.base_slope * x + self.base_offset;
        for &(k, jump) in &self.kinks {
            let u = (x - k) / eps;
            v += jump * ((x - k) * math::normal_cdf(u) + eps * math::normal_pdf(u));
        }
        v
    }

    fn smoothed_slope(&self, x: f64, eps: f64) -> f64 {
        self.base_slope
            + self
                .kinks
                .iter()
                .map(|&(k, jump)| jump * math::normal_cdf((x - k) / eps))
                .sum::<f64>()
    }

    fn smoothed_curvature(&self, x: f64, eps: f64) -> f64 {
        self.kinks
            .iter()
            .map(|&(k, jump)| jump * math::normal_pdf((x - k) / eps) / eps)
            .sum()
    }
}

fn reject(msg: impl Into<String>) -> Error {
    Error::InvalidDescriptor(msg.into())
}

/// Validates a descriptor and builds its oracle.
pub fn make_corpus_function(spec: &CorpusSpec) -> Result<CorpusFunction> {
    let kind = match spec {
        CorpusSpec::Quadratic { a, b, c } => {
            let d = b.len();
            if d == 0 {
                return Err(reject("quadratic: dimension must be >= 1"));
            }
            if a.len() != d || a.iter().any(|row| row.len() != d) {
                return Err(reject(format!("quadratic: A must be {d}x{d} to match b")));
            }
            let m = DMatrix::from_fn(d, d, |i, j| a[i][j]);
            if !m.iter().all(|v| v.is_finite()) || !math::all_finite(b) || !c.is_finite() {
                return Err(reject("quadratic: non-finite coefficient"));
            }
            if !linalg::is_symmetric(&m, 1e-12) {
                return Err(reject("quadratic: A is not symmetric"));
            }
            let lo = linalg::min_eigenvalue(&m);
            if lo < -linalg::PSD_TOL {
                return Err(reject(format!(
                    "quadratic: A is not positive semidefinite (min eigenvalue {lo:e})"
                )));
            }
            Kind::Quadratic {
                a: linalg::symmetrize(&m),
                b: b.clone(),
                c: *c,
            }
        }
        CorpusSpec::AbsNorm { dim } => {
            if *dim == 0 {
                return Err(reject("abs_norm: dimension must be >= 1"));
            }
            Kind::Abs { dim: *dim }
        }
        CorpusSpec::MaxAffine { slopes, offsets } => {
            if slopes.is_empty() || slopes.len() != offsets.len() {
                return Err(reject("max_affine: need matching, non-empty slopes and offsets"));
            }
            if slopes.len() > MAX_AFFINE_PIECES {
                return Err(reject(format!(
                    "max_affine: at most {MAX_AFFINE_PIECES} pieces supported"
                )));
            }
            let d = slopes[0].len();
            if d == 0 || slopes.iter().any(|s| s.len() != d) {
                return Err(reject("max_affine: slopes must share a positive dimension"));
            }
            if slopes.iter().any(|s| !math::all_finite(s)) || !math::all_finite(offsets) {
                return Err(reject("max_affine: non-finite coefficient"));
            }
            let envelope = (d == 1).then(|| {
                let s: Vec<f64> = slopes.iter().map(|s| s[0]).collect();
                Envelope::new(&s, offsets)
            });
            Kind::MaxAffine {
                slopes: slopes.clone(),
                offsets: offsets.clone(),
                envelope,
            }
        }
        CorpusSpec::Power4 => Kind::Power4,
        CorpusSpec::SumOfPieces { dim, pieces } => {
            if *dim == 0 || pieces.is_empty() {
                return Err(reject("sum_of_pieces: need dim >= 1 and at least one piece"));
            }
            let mut used = vec![false; *dim];
            let mut built = Vec::with_capacity(pieces.len());
            for piece in pieces {
                let f = make_corpus_function(&piece.spec)?;
                if piece.coords.len() != f.dim() {
                    return Err(reject(format!(
                        "sum_of_pieces: piece of dimension {} given {} coordinates",
                        f.dim(),
                        piece.coords.len()
                    )));
                }
                for &c in &piece.coords {
                    if c >= *dim {
                        return Err(reject(format!("sum_of_pieces: coordinate {c} out of range")));
                    }
                    if used[c] {
                        return Err(reject(format!(
                            "sum_of_pieces: coordinate {c} used by two pieces"
                        )));
                    }
                    used[c] = true;
                }
                built.push((piece.coords.clone(), f));
            }
            Kind::Sum {
                dim: *dim,
                pieces: built,
            }
        }
    };
    Ok(CorpusFunction {
        spec: spec.clone(),
        kind,
    })
}

fn gather(x: &[f64], coords: &[usize]) -> Vec<f64> {
    coords.iter().map(|&c| x[c]).collect()
}

fn scatter_matrix(target: &mut DMatrix<f64>, block: &DMatrix<f64>, coords: &[usize]) {
    for (a, &i) in coords.iter().enumerate() {
        for (b, &j) in coords.iter().enumerate() {
            target[(i, j)] = block[(a, b)];
        }
    }
}

impl CorpusFunction {
    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    pub fn into_shared(self) -> super::SharedFunction {
        Arc::new(self)
    }

    /// Active pieces of a max-affine function at `x` (ties within 1e-12).
    fn active(slopes: &[Vec<f64>], offsets: &[f64], x: &[f64]) -> (f64, Vec<usize>) {
        let values: Vec<f64> = slopes
            .iter()
            .zip(offsets)
            .map(|(m, c)| math::dot(m, x) + c)
            .collect();
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * (1.0 + math::abs(top));
        let active = (0..values.len()).filter(|&i| values[i] >= top - tol).collect();
        (top, active)
    }
}

impl ConvexFunction for CorpusFunction {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic { a, b, c } => 0.5 * linalg::quad_form(a, x) + math::dot(b, x) + c,
            Kind::Abs { .. } => math::norm(x),
            Kind::MaxAffine { slopes, offsets, .. } => slopes
                .iter()
                .zip(offsets)
                .map(|(m, c)| math::dot(m, x) + c)
                .fold(f64::NEG_INFINITY, f64::max),
            Kind::Power4 => {
                let s = x[0] * x[0];
                s * s
            }
            Kind::Sum { pieces, .. } => pieces
                .iter()
                .map(|(coords, f)| f.eval(&gather(x, coords)))
                .sum(),
        }
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Quadratic { a, b, .. } => math::add(&linalg::mat_vec(a, x), b),
            Kind::Abs { dim } => {
                let n = math::norm(x);
                if n == 0.0 {
                    vec![0.0; *dim]
                } else {
                    math::scale(x, 1.0 / n)
                }
            }
            Kind::MaxAffine { slopes, offsets, .. } => {
                let (_, active) = Self::active(slopes, offsets, x);
                if active.len() == 1 {
                    return slopes[active[0]].clone();
                }
                let pts: Vec<Vec<f64>> = active.iter().map(|&i| slopes[i].clone()).collect();
                match linalg::min_norm_in_hull(&pts) {
                    Ok(h) => h.point,
                    Err(_) => pts[0].clone(),
                }
            }
            Kind::Power4 => vec![4.0 * x[0] * x[0] * x[0]],
            Kind::Sum { dim, pieces } => {
                let mut g = vec![0.0; *dim];
                for (coords, f) in pieces {
                    let p = f.subgradient(&gather(x, coords));
                    for (k, &c) in coords.iter().enumerate() {
                        g[c] = p[k];
                    }
                }
                g
            }
        }
    }

    fn growth(&self) -> Growth {
        match &self.kind {
            Kind::Quadratic { a, b, c } => {
                let nb = math::norm(b);
                Growth {
                    a: 0.5 * linalg::spectral_radius_sym(a) + 0.5 * nb,
                    b: math::abs(*c) + 0.5 * nb,
                    degree: 2,
                }
            }
            Kind::Abs { .. } => Growth {
                a: 1.0,
                b: 0.0,
                degree: 1,
            },
            Kind::MaxAffine { slopes, offsets, .. } => Growth {
                a: slopes.iter().map(|m| math::norm(m)).fold(0.0, f64::max),
                b: offsets.iter().map(|c| math::abs(*c)).fold(0.0, f64::max),
                degree: 1,
            },
            Kind::Power4 => Growth {
                a: 1.0,
                b: 0.0,
                degree: 4,
            },
            Kind::Sum { pieces, .. } => {
                let parts: Vec<Growth> = pieces.iter().map(|(_, f)| f.growth()).collect();
                let degree = parts.iter().map(|g| g.degree).max().unwrap_or(1);
                // |x_P|^k <= 1 + |x|^degree for k <= degree
                let a = parts.iter().map(|g| g.a).sum();
                let b = parts
                    .iter()
                    .map(|g| g.b + if g.degree < degree { g.a } else { 0.0 })
                    .sum();
                Growth { a, b, degree }
            }
        }
    }

    fn hessian_density(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        match &self.kind {
            Kind::Quadratic { a, .. } => Some(a.clone()),
            Kind::Abs { dim } => {
                let n = math::norm(x);
                if n == 0.0 {
                    None
                } else {
                    Some(radial_hessian(x, n, *dim))
                }
            }
            Kind::MaxAffine { slopes, offsets, .. } => {
                let (_, active) = Self::active(slopes, offsets, x);
                (active.len() == 1).then(|| DMatrix::zeros(x.len(), x.len()))
            }
            Kind::Power4 => Some(DMatrix::from_element(1, 1, 12.0 * x[0] * x[0])),
            Kind::Sum { dim, pieces } => {
                let mut q = DMatrix::zeros(*dim, *dim);
                for (coords, f) in pieces {
                    let block = f.hessian_density(&gather(x, coords))?;
                    scatter_matrix(&mut q, &block, coords);
                }
                Some(q)
            }
        }
    }

    fn second_derivative_measure(&self) -> Option<SecondDerivativeMeasure> {
        match &self.kind {
            Kind::Quadratic { a, .. } => {
                let a = a.clone();
                Some(SecondDerivativeMeasure::absolutely_continuous(
                    a.nrows(),
                    Arc::new(move |_| a.clone()),
                ))
            }
            Kind::Abs { dim: 1 } => Some(SecondDerivativeMeasure {
                dim: 1,
                density: Arc::new(|_| DMatrix::zeros(1, 1)),
                atoms: vec![Atom {
                    location: vec![0.0],
                    weight: DMatrix::from_element(1, 1, 2.0),
                }],
            }),
            Kind::Abs { dim } => {
                let dim = *dim;
                Some(SecondDerivativeMeasure::absolutely_continuous(
                    dim,
                    Arc::new(move |x| {
                        let n = math::norm(x);
                        if n == 0.0 {
                            DMatrix::zeros(dim, dim)
                        } else {
                            radial_hessian(x, n, dim)
                        }
                    }),
                ))
            }
            Kind::MaxAffine { envelope, .. } => {
                let env = envelope.as_ref()?;
                Some(SecondDerivativeMeasure {
                    dim: 1,
                    density: Arc::new(|_| DMatrix::zeros(1, 1)),
                    atoms: env
                        .kinks
                        .iter()
                        .map(|&(k, jump)| Atom {
                            location: vec![k],
                            weight: DMatrix::from_element(1, 1, jump),
                        })
                        .collect(),
                })
            }
            Kind::Power4 => Some(SecondDerivativeMeasure::absolutely_continuous(
                1,
                Arc::new(|x| DMatrix::from_element(1, 1, 12.0 * x[0] * x[0])),
            )),
            Kind::Sum { dim, pieces } => {
                let dim = *dim;
                let measures: Vec<(Vec<usize>, SecondDerivativeMeasure)> = pieces
                    .iter()
                    .map(|(c, f)| f.second_derivative_measure().map(|m| (c.clone(), m)))
                    .collect::<Option<_>>()?;
                let single_full = measures.len() == 1 && measures[0].0.len() == dim;
                // atoms of a piece that does not cover every coordinate live
                // on a lower-dimensional set, which is not representable
                if !single_full && measures.iter().any(|(_, m)| !m.atoms.is_empty()) {
                    return None;
                }
                let atoms = if single_full {
                    let (coords, m) = &measures[0];
                    m.atoms
                        .iter()
                        .map(|a| {
                            let mut location = vec![0.0; dim];
                            let mut weight = DMatrix::zeros(dim, dim);
                            for (k, &c) in coords.iter().enumerate() {
                                location[c] = a.location[k];
                            }
                            scatter_matrix(&mut weight, &a.weight, coords);
                            Atom { location, weight }
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let density = move |x: &[f64]| {
                    let mut q = DMatrix::zeros(dim, dim);
                    for (coords, m) in &measures {
                        scatter_matrix(&mut q, &m.density_at(&gather(x, coords)), coords);
                    }
                    q
                };
                Some(SecondDerivativeMeasure {
                    dim,
                    density: Arc::new(density),
                    atoms,
                })
            }
        }
    }

    fn is_smooth(&self) -> bool {
        match &self.kind {
            Kind::Quadratic { .. } | Kind::Power4 => true,
            Kind::Abs { .. } => false,
            Kind::MaxAffine { slopes, .. } => slopes.iter().all(|m| *m == slopes[0]),
            Kind::Sum { pieces, .. } => pieces.iter().all(|(_, f)| f.is_smooth()),
        }
    }

    fn smoothed_value(&self, x: &[f64], eps: f64) -> Option<f64> {
        match &self.kind {
            Kind::Quadratic { a, .. } => Some(self.eval(x) + 0.5 * eps * eps * a.trace()),
            Kind::Abs { dim: 1 } => {
                let u = x[0] / eps;
                Some(x[0] * (2.0 * math::normal_cdf(u) - 1.0) + 2.0 * eps * math::normal_pdf(u))
            }
            Kind::Abs { .. } => None,
            Kind::MaxAffine { envelope: Some(env), .. } => Some(env.smoothed_value(x[0], eps)),
            Kind::MaxAffine { .. } => self.is_smooth().then(|| self.eval(x)),
            Kind::Power4 => {
                let (x2, e2) = (x[0] * x[0], eps * eps);
                Some(x2 * x2 + 6.0 * e2 * x2 + 3.0 * e2 * e2)
            }
            Kind::Sum { pieces, .. } => pieces
                .iter()
                .map(|(c, f)| f.smoothed_value(&gather(x, c), eps))
                .sum(),
        }
    }

    fn smoothed_gradient(&self, x: &[f64], eps: f64) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Quadratic { .. } => Some(self.subgradient(x)),
            Kind::Abs { dim: 1 } => Some(vec![2.0 * math::normal_cdf(x[0] / eps) - 1.0]),
            Kind::Abs { .. } => None,
            Kind::MaxAffine { envelope: Some(env), .. } => Some(vec![env.smoothed_slope(x[0], eps)]),
            Kind::MaxAffine { .. } => self.is_smooth().then(|| self.subgradient(x)),
            Kind::Power4 => Some(vec![4.0 * x[0] * x[0] * x[0] + 12.0 * eps * eps * x[0]]),
            Kind::Sum { dim, pieces } => {
                let mut g = vec![0.0; *dim];
                for (coords, f) in pieces {
                    let p = f.smoothed_gradient(&gather(x, coords), eps)?;
                    for (k, &c) in coords.iter().enumerate() {
                        g[c] = p[k];
                    }
                }
                Some(g)
            }
        }
    }

    fn smoothed_hessian(&self, x: &[f64], eps: f64) -> Option<DMatrix<f64>> {
        let scalar = |v: f64| Some(DMatrix::from_element(1, 1, v));
        match &self.kind {
            Kind::Quadratic { a, .. } => Some(a.clone()),
            Kind::Abs { dim: 1 } => scalar(2.0 * math::normal_pdf(x[0] / eps) / eps),
            Kind::Abs { .. } => None,
            Kind::MaxAffine { envelope: Some(env), .. } => scalar(env.smoothed_curvature(x[0], eps)),
            Kind::MaxAffine { .. } => self.is_smooth().then(|| DMatrix::zeros(x.len(), x.len())),
            Kind::Power4 => scalar(12.0 * x[0] * x[0] + 12.0 * eps * eps),
            Kind::Sum { dim, pieces } => {
                let mut q = DMatrix::zeros(*dim, *dim);
                for (coords, f) in pieces {
                    scatter_matrix(&mut q, &f.smoothed_hessian(&gather(x, coords), eps)?, coords);
                }
                Some(q)
            }
        }
    }

    fn axis_breakpoints(&self, axis: usize) -> Vec<f64> {
        match &self.kind {
            Kind::Abs { .. } => vec![0.0],
            Kind::MaxAffine { envelope, .. } => envelope
                .as_ref()
                .map(|e| e.kinks.iter().map(|k| k.0).collect())
                .unwrap_or_default(),
            Kind::Sum { pieces, .. } => pieces
                .iter()
                .find_map(|(coords, f)| {
                    coords
                        .iter()
                        .position(|&c| c == axis)
                        .map(|p| f.axis_breakpoints(p))
                })
                .unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

/// Hessian `(I − u uᵀ)/‖x‖` of the Euclidean norm away from the origin.
fn radial_hessian(x: &[f64], n: f64, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta - x[i] * x[j] / (n * n)) / n
    })
}

/// Descriptor of `x ↦ f(Sx)` when the corpus is closed under the
/// composition: any `S` for quadratic and max-affine functions, orthogonal
/// `S` for the norm and `x⁴`, and permutation matrices for sums of pieces.
pub fn compose_linear(spec: &CorpusSpec, s: &DMatrix<f64>) -> Option<CorpusSpec> {
    let d = spec.dim();
    if s.nrows() != d || s.ncols() != d {
        return None;
    }
    let st = s.transpose();
    match spec {
        CorpusSpec::Quadratic { a, b, c } => {
            let am = DMatrix::from_fn(d, d, |i, j| a[i][j]);
            let composed = &st * am * s;
            let bs = linalg::mat_vec(&st, b);
            Some(CorpusSpec::quadratic(&composed, &bs, *c))
        }
        CorpusSpec::MaxAffine { slopes, offsets } => Some(CorpusSpec::MaxAffine {
            slopes: slopes.iter().map(|m| linalg::mat_vec(&st, m)).collect(),
            offsets: offsets.clone(),
        }),
        CorpusSpec::AbsNorm { .. } | CorpusSpec::Power4 => {
            let gram = &st * s;
            let ident = DMatrix::<f64>::identity(d, d);
            ((gram - ident).amax() <= 1e-12).then(|| spec.clone())
        }
        CorpusSpec::SumOfPieces { dim, pieces } => {
            let perm = permutation_of(s)?;
            Some(CorpusSpec::SumOfPieces {
                dim: *dim,
                pieces: pieces
                    .iter()
                    .map(|p| Piece {
                        coords: p.coords.iter().map(|&c| perm[c]).collect(),
                        spec: p.spec.clone(),
                    })
                    .collect(),
            })
        }
    }
}

/// For a permutation matrix `S`, the map `i ↦ π(i)` with `(Sx)_i = x_{π(i)}`.
fn permutation_of(s: &DMatrix<f64>) -> Option<Vec<usize>> {
    let d = s.nrows();
    let mut perm = Vec::with_capacity(d);
    let mut seen = vec![false; d];
    for i in 0..d {
        let mut col = None;
        for j in 0..d {
            let v = s[(i, j)];
            if v == 1.0 && col.is_none() {
                col = Some(j);
            } else if v != 0.0 {
                return None;
            }
        }
        let j = col?;
        if seen[j] {
            return None;
        }
        seen[j] = true;
        perm.push(j);
    }
    Some(perm)
}

impl core::fmt::Display for CorpusSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let name = match self {
            CorpusSpec::Quadratic { .. } => "quadratic",
            CorpusSpec::AbsNorm { .. } => "abs_norm",
            CorpusSpec::MaxAffine { .. } => "max_affine",
            CorpusSpec::Power4 => "power4_1d",
            CorpusSpec::SumOfPieces { .. } => "sum_of_pieces",
        };
        write!(f, "{name}(d={})", self.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_1d() -> CorpusFunction {
        make_corpus_function(&CorpusSpec::AbsNorm { dim: 1 }).unwrap()
    }

    #[test]
    fn rejects_indefinite_quadratic() {
        let spec = CorpusSpec::Quadratic {
            a: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            b: vec![0.0, 0.0],
            c: 0.0,
        };
        assert!(matches!(make_corpus_function(&spec), Err(Error::InvalidDescriptor(_))));
    }

    #[test]
    fn rejects_overlapping_pieces() {
        let spec = CorpusSpec::SumOfPieces {
            dim: 2,
            pieces: vec![
                Piece { coords: vec![0], spec: CorpusSpec::Power4 },
                Piece { coords: vec![0], spec: CorpusSpec::AbsNorm { dim: 1 } },
            ],
        };
        assert!(make_corpus_function(&spec).is_err());
    }

    #[test]
    fn identity_quadratic() {
        let f = make_corpus_function(&CorpusSpec::half_norm_sq(2)).unwrap();
        assert_eq!(f.eval(&[1.0, 2.0]), 2.5);
        assert_eq!(f.subgradient(&[1.0, 2.0]), vec![1.0, 2.0]);
        assert_eq!(f.hessian_density(&[3.0, 4.0]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn abs_least_norm_and_measure() {
        let f = abs_1d();
        assert_eq!(f.subgradient(&[0.0]), vec![0.0]);
        assert_eq!(f.subgradient(&[-3.0]), vec![-1.0]);
        assert!(f.hessian_density(&[0.0]).is_none());
        let mu = f.second_derivative_measure().unwrap();
        assert_eq!(mu.atoms.len(), 1);
        assert_eq!(mu.atoms[0].weight[(0, 0)], 2.0);
    }

    #[test]
    fn hinge_least_norm_is_zero() {
        let f = make_corpus_function(&CorpusSpec::MaxAffine {
            slopes: vec![vec![0.0], vec![1.0]],
            offsets: vec![0.0, 0.0],
        })
        .unwrap();
        // brute force over the subdifferential [0, 1]
        let brute = (0..=1000)
            .map(|k| k as f64 / 1000.0)
            .fold(f64::INFINITY, |m, v| if v.abs() < m.abs() { v } else { m });
        assert_eq!(f.subgradient(&[0.0]), vec![brute]);
    }

    #[test]
    fn max_affine_matches_abs_on_grid() {
        let f = make_corpus_function(&CorpusSpec::MaxAffine {
            slopes: vec![vec![-1.0], vec![1.0]],
            offsets: vec![0.0, 0.0],
        })
        .unwrap();
        let g = abs_1d();
        for k in -200..=200 {
            let x = [k as f64 * 0.037];
            assert_eq!(f.eval(&x), g.eval(&x));
        }
        let mu = f.second_derivative_measure().unwrap();
        assert_eq!(mu.atoms[0].location, vec![0.0]);
        assert_eq!(mu.atoms[0].weight[(0, 0)], 2.0);
        assert_eq!(f.subgradient(&[0.0]), vec![0.0]);
    }

    #[test]
    fn envelope_drops_dominated_lines() {
        // the middle line 0.5x - 10 never touches the envelope
        let env = Envelope::new(&[-1.0, 0.5, 1.0], &[0.0, -10.0, 0.0]);
        assert_eq!(env.kinks, vec![(0.0, 2.0)]);
        let env = Envelope::new(&[-1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]);
        assert_eq!(env.kinks, vec![(-1.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn smoothed_abs_closed_forms() {
        let f = abs_1d();
        let v = f.smoothed_value(&[0.0], 1.0).unwrap();
        assert!((v - math::sqrt(2.0 / core::f64::consts::PI)).abs() < 1e-15);
        let h = f.smoothed_hessian(&[0.0], 1e-3).unwrap()[(0, 0)];
        assert!((h - 2.0 / 1e-3 * math::INV_SQRT_2PI).abs() < 1e-9);
    }

    #[test]
    fn separable_sum_blocks() {
        let spec = CorpusSpec::SumOfPieces {
            dim: 2,
            pieces: vec![
                Piece { coords: vec![0], spec: CorpusSpec::AbsNorm { dim: 1 } },
                Piece { coords: vec![1], spec: CorpusSpec::half_norm_sq(1) },
            ],
        };
        let f = make_corpus_function(&spec).unwrap();
        assert_eq!(f.eval(&[-1.0, 2.0]), 3.0);
        assert_eq!(f.subgradient(&[-1.0, 2.0]), vec![-1.0, 2.0]);
        let q = f.hessian_density(&[1.0, 0.0]).unwrap();
        assert_eq!(q, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        // the kink of |x1| is a line in the plane, not an atom
        assert!(f.second_derivative_measure().is_none());
        assert_eq!(f.axis_breakpoints(0), vec![0.0]);
        assert!(f.axis_breakpoints(1).is_empty());
    }

    #[test]
    fn permutation_composition_swaps_pieces() {
        let spec = CorpusSpec::SumOfPieces {
            dim: 2,
            pieces: vec![
                Piece { coords: vec![0], spec: CorpusSpec::half_norm_sq(1) },
                Piece { coords: vec![1], spec: CorpusSpec::Power4 },
            ],
        };
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let composed = make_corpus_function(&compose_linear(&spec, &swap).unwrap()).unwrap();
        let f = make_corpus_function(&spec).unwrap();
        for x in [[0.3, -1.2], [2.0, 0.5]] {
            assert_eq!(composed.eval(&x), f.eval(&[x[1], x[0]]));
        }
    }
}
