use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

type MatrixDensity = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type ScalarDensity = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A point mass with a PSD matrix weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub weight: DMatrix<f64>,
}

/// Matrix-valued measure `μ = Q(y) dy + Σ W_k δ_{y_k}`.
///
/// Singular parts carried by hypersurfaces are not representable; functions
/// that have them report no measure at all.
#[derive(Clone)]
pub struct SecondDerivativeMeasure {
    pub dim: usize,
    pub density: MatrixDensity,
    pub atoms: Vec<Atom>,
}

impl fmt::Debug for SecondDerivativeMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecondDerivativeMeasure")
            .field("dim", &self.dim)
            .field("atoms", &self.atoms)
            .finish_non_exhaustive()
    }
}

impl SecondDerivativeMeasure {
    /// Validates atom weights (symmetric PSD) and distinct atom locations.
    pub fn new(dim: usize, density: MatrixDensity, atoms: Vec<Atom>) -> Result<Self> {
        for (k, atom) in atoms.iter().enumerate() {
            crate::error::check_dim(dim, atom.location.len())?;
            if atom.weight.nrows() != dim || atom.weight.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: atom.weight.nrows(),
                });
            }
            linalg::check_psd(&atom.weight, linalg::PSD_TOL)?;
            if atoms[..k].iter().any(|a| a.location == atom.location) {
                return Err(Error::InvalidDescriptor(
                    "atoms must have distinct locations".to_string(),
                ));
            }
        }
        Ok(Self {
            dim,
            density,
            atoms,
        })
    }

    pub fn absolutely_continuous(dim: usize, density: MatrixDensity) -> Self {
        Self {
            dim,
            density,
            atoms: Vec::new(),
        }
    }

    pub fn density_at(&self, x: &[f64]) -> DMatrix<f64> {
        (self.density)(x)
    }

    /// Scalar measure `tr μ`.
    pub fn trace(&self) -> ScalarMeasure {
        let density = self.density.clone();
        ScalarMeasure {
            dim: self.dim,
            density: Arc::new(move |x| density(x).trace()),
            atoms: self
                .atoms
                .iter()
                .map(|a| (a.location.clone(), a.weight.trace()))
                .collect(),
        }
    }

    /// `½ tr μ`, the Revuz measure of the compensator of `f(W)`.
    pub fn revuz(&self) -> ScalarMeasure {
        self.trace().scaled(0.5)
    }
}

/// Nonnegative scalar measure `q(y) dy + Σ w_k δ_{y_k}`.
#[derive(Clone)]
pub struct ScalarMeasure {
    pub dim: usize,
    pub density: ScalarDensity,
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl fmt::Debug for ScalarMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarMeasure")
            .field("dim", &self.dim)
            .field("atoms", &self.atoms)
            .finish_non_exhaustive()
    }
}

impl ScalarMeasure {
    pub fn zero(dim: usize) -> Self {
        Self::lebesgue(dim, 0.0)
    }

    /// `c` times Lebesgue measure.
    pub fn lebesgue(dim: usize, c: f64) -> Self {
        Self {
            dim,
            density: Arc::new(move |_| c),
            atoms: Vec::new(),
        }
    }

    pub fn dirac(location: Vec<f64>, weight: f64) -> Self {
        Self {
            dim: location.len(),
            density: Arc::new(|_| 0.0),
            atoms: alloc::vec![(location, weight)],
        }
    }

    pub fn with_density(dim: usize, density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            density: Arc::new(density),
            atoms: Vec::new(),
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        let density = self.density;
        Self {
            dim: self.dim,
            density: Arc::new(move |x| c * density(x)),
            atoms: self.atoms.into_iter().map(|(l, w)| (l, c * w)).collect(),
        }
    }

    pub fn plus(self, other: ScalarMeasure) -> Result<Self> {
        crate::error::check_dim(self.dim, other.dim)?;
        let (d1, d2) = (self.density, other.density);
        let mut atoms = self.atoms;
        for (loc, w) in other.atoms {
            match atoms.iter_mut().find(|(l, _)| *l == loc) {
                Some(existing) => existing.1 += w,
                None => atoms.push((loc, w)),
            }
        }
        Ok(Self {
            dim: self.dim,
            density: Arc::new(move |x| d1(x) + d2(x)),
            atoms,
        })
    }

    pub fn density_at(&self, x: &[f64]) -> f64 {
        (self.density)(x)
    }
}
