//! The weighted-average merger `M_lambda` and elementary checks on
//! candidate merging functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::tolerances;
use crate::weights::Weights;

/// A vector of `K` e-values: finite and nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EValueVector {
    values: Vec<f64>,
}

impl EValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("e-values", "need at least one entry"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(
                    format!("e-values[{i}]"),
                    format!("{v} is not finite and >= 0"),
                ));
            }
        }
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for EValueVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        EValueVector::new(values)
    }
}

impl From<EValueVector> for Vec<f64> {
    fn from(e: EValueVector) -> Self {
        e.values
    }
}

/// `M_lambda(e) = sum_k lambda_k e_k + lambda_{K+1}`.
pub fn weighted_merge(lambda: &Weights, e: &EValueVector) -> Result<f64> {
    lambda.merge(e.as_slice())
}

/// Outcome of [`structural_upper_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum StructuralCheck {
    Pass,
    Violation {
        index: Vec<usize>,
        point: Vec<f64>,
        value: f64,
        bound: f64,
        gap: f64,
    },
}

impl StructuralCheck {
    pub fn passed(&self) -> bool {
        matches!(self, StructuralCheck::Pass)
    }
}

/// Checks the necessary condition `F(e) <= 1 v max(e)` at every grid node.
///
/// Any valid merging function satisfies it; a violation can be turned into
/// an explicit counterexample with
/// [`binary_adversary`](crate::transport::binary_adversary).
pub fn structural_upper_check(f: &GridFunction) -> StructuralCheck {
    for flat in 0..f.len() {
        let index = f.unravel(flat);
        let point = f.node(&index);
        let bound = point.iter().copied().fold(1.0, f64::max);
        let value = f.values()[flat];
        if value > bound + tolerances::ARITHMETIC * bound {
            return StructuralCheck::Violation {
                index,
                point,
                value,
                bound,
                gap: value - bound,
            };
        }
    }
    StructuralCheck::Pass
}

/// Converts a level-`alpha` test outcome `tau` into the e-value `tau / alpha`.
pub fn test_to_evalue(tau: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid("tau", format!("{tau} is outside [0, 1]")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} is outside (0, 1]")));
    }
    Ok(tau / alpha)
}
