//! The propagator `G(t) = exp(-iM t)`.
//!
//! Two evaluation routes: diagonalization `G(t) = K e^{Λt} K⁻¹`, used when
//! `-iM` has a well-conditioned eigenbasis, and Padé scaling-and-squaring,
//! used at or near exceptional points where the eigenbasis degenerates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::DynamicalMatrix;
use crate::spectra::{default_cluster_tol, numerical_spectrum};
use crate::C64;

/// Eigenbases with a larger condition number fall back to
/// scaling-and-squaring.
pub const MAX_EIGENBASIS_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorMethod {
    Eigendecomposition,
    ScalingAndSquaring,
}

#[derive(Debug, Clone)]
struct EigenBasis {
    vectors: DMatrix<C64>,
    inverse: DMatrix<C64>,
    values: Vec<C64>,
}

fn eigenbasis(m: &DynamicalMatrix) -> Result<Option<EigenBasis>> {
    let spectrum = numerical_spectrum(m, default_cluster_tol(m))?;
    if spectrum.is_defective {
        return Ok(None);
    }
    let mut columns = Vec::with_capacity(m.dim());
    let mut values = Vec::with_capacity(m.dim());
    for pair in &spectrum.eigenpairs {
        for v in &pair.eigenvectors {
            columns.push(v.clone());
            values.push(pair.lambda);
        }
    }
    if columns.len() != m.dim() {
        return Ok(None);
    }
    let vectors = DMatrix::from_columns(&columns);
    if linalg::condition_number(&vectors) > MAX_EIGENBASIS_CONDITION {
        return Ok(None);
    }
    let inverse = match vectors.clone().lu().try_inverse() {
        Some(inv) => inv,
        None => return Ok(None),
    };
    Ok(Some(EigenBasis {
        vectors,
        inverse,
        values,
    }))
}

/// Reusable evaluator of `exp(-iM t)` for one matrix.
#[derive(Debug, Clone)]
pub struct Propagator {
    generator: DMatrix<C64>,
    eigen: Option<EigenBasis>,
}

impl Propagator {
    /// Diagonalizes when the eigenbasis is complete and well conditioned,
    /// otherwise uses scaling-and-squaring.
    pub fn new(m: &DynamicalMatrix) -> Result<Self> {
        Ok(Propagator {
            generator: m.generator(),
            eigen: eigenbasis(m)?,
        })
    }

    /// Forces a route. Requesting diagonalization of a defective or
    /// ill-conditioned matrix is an error.
    pub fn with_method(m: &DynamicalMatrix, method: PropagatorMethod) -> Result<Self> {
        let eigen = match method {
            PropagatorMethod::ScalingAndSquaring => None,
            PropagatorMethod::Eigendecomposition => Some(eigenbasis(m)?.ok_or_else(|| {
                Error::EigenSolver("matrix has no well-conditioned eigenbasis".into())
            })?),
        };
        Ok(Propagator {
            generator: m.generator(),
            eigen,
        })
    }

    pub fn method(&self) -> PropagatorMethod {
        if self.eigen.is_some() {
            PropagatorMethod::Eigendecomposition
        } else {
            PropagatorMethod::ScalingAndSquaring
        }
    }

    pub fn at(&self, t: f64) -> Result<DMatrix<C64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid("t", format!("propagation time must be finite and >= 0, got {t}")));
        }
        let n = self.generator.nrows();
        if t == 0.0 {
            return Ok(DMatrix::identity(n, n));
        }
        Ok(match &self.eigen {
            Some(basis) => {
                let mut scaled = basis.vectors.clone();
                for (j, lambda) in basis.values.iter().enumerate() {
                    let factor = (lambda * t).exp();
                    scaled.column_mut(j).iter_mut().for_each(|z| *z *= factor);
                }
                scaled * &basis.inverse
            }
            None => linalg::expm(&(&self.generator * C64::new(t, 0.0))),
        })
    }
}

/// `G(t)` together with the route that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorValue {
    pub matrix: DMatrix<C64>,
    pub method: PropagatorMethod,
}

/// One-shot `exp(-iM t)`.
pub fn propagator(m: &DynamicalMatrix, t: f64) -> Result<PropagatorValue> {
    let p = Propagator::new(m)?;
    Ok(PropagatorValue {
        matrix: p.at(t)?,
        method: p.method(),
    })
}
