use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances;

/// A point of the simplex with `K + 1` entries.
///
/// The first `K` entries weight the input e-values and the last one weights
/// the constant 1, so `merge` computes `lambda . (e, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights {
    entries: Vec<f64>,
}

impl Weights {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::invalid(
                "weights",
                format!("need at least 2 entries, got {}", entries.len()),
            ));
        }
        for (i, &w) in entries.iter().enumerate() {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(
                    format!("weights[{i}]"),
                    format!("{w} is outside [0, 1]"),
                ));
            }
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > tolerances::ARITHMETIC {
            return Err(Error::invalid(
                "weights",
                format!("entries sum to {total}, not 1"),
            ));
        }
        Ok(Self { entries })
    }

    /// Weights with the given input part; the remainder goes to the constant.
    pub fn from_inputs(inputs: &[f64]) -> Result<Self> {
        let used: f64 = inputs.iter().sum();
        let mut entries = inputs.to_vec();
        entries.push(1.0 - used);
        Self::new(entries)
    }

    /// `(1/K, ..., 1/K, 0)`: the arithmetic mean of the inputs.
    pub fn arithmetic_mean(arity: usize) -> Self {
        assert!(arity > 0, "arity must be positive");
        let mut entries = vec![1.0 / arity as f64; arity];
        entries.push(0.0);
        Self { entries }
    }

    /// `(0, ..., 0, 1)`: the constant merger that always outputs 1.
    pub fn constant(arity: usize) -> Self {
        assert!(arity > 0, "arity must be positive");
        let mut entries = vec![0.0; arity + 1];
        entries[arity] = 1.0;
        Self { entries }
    }

    /// Number of e-values merged (`K`).
    pub fn arity(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn input_weights(&self) -> &[f64] {
        &self.entries[..self.arity()]
    }

    pub fn constant_weight(&self) -> f64 {
        self.entries[self.arity()]
    }

    /// `lambda . (e, 1)` without validating `e`.
    pub fn merge(&self, e: &[f64]) -> Result<f64> {
        if e.len() != self.arity() {
            return Err(Error::DimensionMismatch {
                what: "e-value vector",
                expected: self.arity(),
                found: e.len(),
            });
        }
        Ok(self.apply(e))
    }

    pub(crate) fn apply(&self, e: &[f64]) -> f64 {
        self.input_weights()
            .iter()
            .zip(e)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.constant_weight()
    }

    pub fn linf_distance(&self, other: &Weights) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Weights::new(entries)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Self {
        w.entries
    }
}
