//! Named corpus functions: built-ins plus entries from a TOML config file.
//!
//! ```toml
//! [functions.tilted_bowl]
//! kind = "quadratic"
//! a = [[2.0, 0.5], [0.5, 1.0]]
//! b = [0.1, 0.0]
//! smoothing = 0.2   # optional Gaussian mollification scale
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use convex_ito_core::convex_model::{
    make_corpus_function, mollify, CorpusSpec, Piece, SharedFunction, DEFAULT_HERMITE_ORDER,
};
use serde::Deserialize;

use crate::error::CliError;

/// Serialised form of a [`CorpusSpec`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Descriptor {
    Quadratic {
        a: Vec<Vec<f64>>,
        #[serde(default)]
        b: Option<Vec<f64>>,
        #[serde(default)]
        c: f64,
    },
    AbsNorm {
        dim: usize,
    },
    MaxAffine {
        slopes: Vec<Vec<f64>>,
        offsets: Vec<f64>,
    },
    Power4,
    SumOfPieces {
        dim: usize,
        pieces: Vec<PieceDescriptor>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceDescriptor {
    pub coords: Vec<usize>,
    pub function: Descriptor,
}

impl Descriptor {
    pub fn to_spec(&self) -> CorpusSpec {
        match self {
            Descriptor::Quadratic { a, b, c } => CorpusSpec::Quadratic {
                a: a.clone(),
                b: b.clone().unwrap_or_else(|| vec![0.0; a.len()]),
                c: *c,
            },
            Descriptor::AbsNorm { dim } => CorpusSpec::AbsNorm { dim: *dim },
            Descriptor::MaxAffine { slopes, offsets } => CorpusSpec::MaxAffine {
                slopes: slopes.clone(),
                offsets: offsets.clone(),
            },
            Descriptor::Power4 => CorpusSpec::Power4,
            Descriptor::SumOfPieces { dim, pieces } => CorpusSpec::SumOfPieces {
                dim: *dim,
                pieces: pieces
                    .iter()
                    .map(|p| Piece {
                        coords: p.coords.clone(),
                        spec: p.function.to_spec(),
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EntryFile {
    #[serde(flatten)]
    pub descriptor: Descriptor,
    #[serde(default)]
    pub smoothing: Option<f64>,
    #[serde(default)]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub spec: CorpusSpec,
    /// Gaussian mollification scale applied on top of `spec`.
    pub smoothing: Option<f64>,
    pub description: String,
}

impl Entry {
    fn new(spec: CorpusSpec, smoothing: Option<f64>, description: &str) -> Self {
        Self {
            spec,
            smoothing,
            description: description.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn build(&self) -> Result<SharedFunction, CliError> {
        let base = make_corpus_function(&self.spec)?.into_shared();
        match self.smoothing {
            Some(eps) => Ok(Arc::new(mollify(base, eps, DEFAULT_HERMITE_ORDER)?)),
            None => Ok(base),
        }
    }

    /// Exact Hessian when the entry is a quadratic, unaffected by smoothing.
    pub fn quadratic_matrix(&self) -> Option<nalgebra::DMatrix<f64>> {
        match &self.spec {
            CorpusSpec::Quadratic { a, .. } => {
                let d = a.len();
                Some(nalgebra::DMatrix::from_fn(d, d, |i, j| a[i][j]))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Entry>,
}

fn quad(a: Vec<Vec<f64>>) -> CorpusSpec {
    let d = a.len();
    CorpusSpec::Quadratic { a, b: vec![0.0; d], c: 0.0 }
}

impl Registry {
    pub fn builtin() -> Self {
        let mut r = Self::default();
        let mut add = |id: &str, e: Entry| {
            r.entries.insert(id.into(), e);
        };
        for d in 1..=3 {
            add(
                &format!("quadratic_identity_d{d}"),
                Entry::new(CorpusSpec::half_norm_sq(d), None, "½‖x‖²"),
            );
        }
        add(
            "quadratic_aniso_d2",
            Entry::new(quad(vec![vec![2.0, 0.5], vec![0.5, 1.0]]), None, "½⟨Ax,x⟩, A = [[2, .5], [.5, 1]]"),
        );
        add(
            "quadratic_aniso_d3",
            Entry::new(
                quad(vec![vec![3.0, 1.0, 0.0], vec![1.0, 2.0, 0.5], vec![0.0, 0.5, 1.0]]),
                None,
                "½⟨Ax,x⟩, tridiagonal A",
            ),
        );
        add("abs_1d", Entry::new(CorpusSpec::AbsNorm { dim: 1 }, None, "|x|"));
        add("abs_2d", Entry::new(CorpusSpec::AbsNorm { dim: 2 }, None, "‖x‖ in R²"));
        add("power4_1d", Entry::new(CorpusSpec::Power4, None, "x⁴"));
        add(
            "max_affine_1d",
            Entry::new(
                CorpusSpec::MaxAffine {
                    slopes: vec![vec![-1.0], vec![0.5], vec![2.0]],
                    offsets: vec![0.0, 0.0, -1.0],
                },
                None,
                "max(-x, x/2, 2x - 1)",
            ),
        );
        add(
            "max_affine_2d",
            Entry::new(
                CorpusSpec::MaxAffine {
                    slopes: vec![vec![1.0, 0.0], vec![-1.0, 0.5], vec![0.0, -1.0]],
                    offsets: vec![0.0, 0.2, 0.1],
                },
                None,
                "max of three affine pieces in R²",
            ),
        );
        add(
            "abs_plus_quadratic_d2",
            Entry::new(
                CorpusSpec::SumOfPieces {
                    dim: 2,
                    pieces: vec![
                        Piece { coords: vec![0], spec: CorpusSpec::AbsNorm { dim: 1 } },
                        Piece { coords: vec![1], spec: CorpusSpec::half_norm_sq(1) },
                    ],
                },
                None,
                "|x₁| + ½x₂²",
            ),
        );
        add(
            "affine_d2",
            Entry::new(
                CorpusSpec::MaxAffine { slopes: vec![vec![0.5, -1.0]], offsets: vec![0.3] },
                None,
                "⟨a,x⟩ + b",
            ),
        );
        add(
            "abs_1d_smoothed",
            Entry::new(CorpusSpec::AbsNorm { dim: 1 }, Some(0.5), "|x|"),
        );
        add(
            "abs_plus_max_affine_d2_smoothed",
            Entry::new(
                CorpusSpec::SumOfPieces {
                    dim: 2,
                    pieces: vec![
                        Piece { coords: vec![0], spec: CorpusSpec::AbsNorm { dim: 1 } },
                        Piece {
                            coords: vec![1],
                            spec: CorpusSpec::MaxAffine {
                                slopes: vec![vec![-1.0], vec![0.5], vec![2.0]],
                                offsets: vec![0.0, 0.0, -1.0],
                            },
                        },
                    ],
                },
                Some(0.5),
                "|x₁| + max(-x₂, x₂/2, 2x₂ - 1)",
            ),
        );
        r
    }

    /// Adds or replaces entries from the `[functions.*]` tables of a config.
    pub fn extend_from(&mut self, functions: BTreeMap<String, EntryFile>) -> Result<(), CliError> {
        for (id, e) in functions {
            let entry = Entry {
                spec: e.descriptor.to_spec(),
                smoothing: e.smoothing,
                description: e.description.unwrap_or_default(),
            };
            make_corpus_function(&entry.spec)
                .map_err(|err| CliError::Config(format!("function '{id}': {err}")))?;
            if let Some(eps) = entry.smoothing {
                if !(eps > 0.0 && eps.is_finite()) {
                    return Err(CliError::Config(format!("function '{id}': smoothing must be > 0")));
                }
            }
            self.entries.insert(id, entry);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&Entry, CliError> {
        self.entries.get(id).ok_or_else(|| CliError::UnknownFunction {
            id: id.into(),
            listing: self.listing(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Entry)> {
        self.entries.iter()
    }

    pub fn listing(&self) -> String {
        let mut s = String::new();
        for (id, e) in &self.entries {
            let mut notes: Vec<String> = Vec::new();
            if !e.description.is_empty() {
                notes.push(e.description.clone());
            }
            if let Some(eps) = e.smoothing {
                notes.push(format!("smoothing {eps}"));
            }
            let _ = writeln!(s, "  {id:<32} d={} {}", e.dim(), notes.join(", "));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_construct() {
        let r = Registry::builtin();
        for (id, e) in r.iter() {
            let f = e.build().unwrap_or_else(|err| panic!("{id}: {err}"));
            assert_eq!(f.dim(), e.dim());
        }
        assert!(matches!(r.get("nope"), Err(CliError::UnknownFunction { .. })));
    }

    #[test]
    fn toml_entries_parse() {
        let text = r#"
            [bowl]
            kind = "quadratic"
            a = [[2.0, 0.0], [0.0, 1.0]]
            smoothing = 0.1

            [split]
            kind = "sum_of_pieces"
            dim = 2
            pieces = [
                { coords = [0], function = { kind = "power4" } },
                { coords = [1], function = { kind = "abs_norm", dim = 1 } },
            ]
        "#;
        let map: BTreeMap<String, EntryFile> = toml::from_str(text).unwrap();
        let mut r = Registry::default();
        r.extend_from(map).unwrap();
        assert_eq!(r.get("bowl").unwrap().smoothing, Some(0.1));
        assert_eq!(r.get("split").unwrap().dim(), 2);
        let bad: BTreeMap<String, EntryFile> =
            toml::from_str("[neg]\nkind = \"quadratic\"\na = [[-1.0]]\n").unwrap();
        assert!(r.extend_from(bad).is_err());
    }
}
