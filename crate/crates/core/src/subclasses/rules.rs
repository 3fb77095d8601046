//! Merging rules that are only valid on restricted classes of inputs.

use serde::{Deserialize, Serialize};

use super::calibrator::{Calibrator, MarginalModel};
use crate::error::{Error, Result};
use crate::merge::EValueVector;
use crate::weights::Weights;

/// Upper bounds `sigma_ij >= E[E_i E_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SecondMomentBound {
    sigma: Vec<Vec<f64>>,
}

impl SecondMomentBound {
    pub fn new(sigma: Vec<Vec<f64>>) -> Result<Self> {
        let k = sigma.len();
        if k == 0 {
            return Err(Error::invalid("sigma", "empty matrix"));
        }
        for (i, row) in sigma.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "sigma row",
                    expected: k,
                    found: row.len(),
                });
            }
            for (j, &s) in row.iter().enumerate() {
                if !s.is_finite() || s < 0.0 {
                    return Err(Error::invalid(
                        format!("sigma[{i}][{j}]"),
                        format!("{s} is not finite and >= 0"),
                    ));
                }
                if s != sigma[j][i] {
                    return Err(Error::invalid(
                        format!("sigma[{i}][{j}]"),
                        "matrix is not symmetric",
                    ));
                }
            }
        }
        Ok(Self { sigma })
    }

    /// Every entry equal to `s`.
    pub fn uniform(k: usize, s: f64) -> Result<Self> {
        Self::new(vec![vec![s; k]; k])
    }

    pub fn arity(&self) -> usize {
        self.sigma.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.sigma.get(i).and_then(|r| r.get(j)).copied()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SecondMomentBound {
    type Error = Error;

    fn try_from(sigma: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(sigma)
    }
}

impl From<SecondMomentBound> for Vec<Vec<f64>> {
    fn from(s: SecondMomentBound) -> Self {
        s.sigma
    }
}

/// `M_lambda(f_1(g_1(e_1)), ..., f_K(g_K(e_K)))`.
pub fn calibrated_merge(
    lambda: &Weights,
    calibrators: &[Calibrator],
    survivals: &[MarginalModel],
    e: &EValueVector,
) -> Result<f64> {
    let k = lambda.arity();
    for (what, found) in [
        ("calibrators", calibrators.len()),
        ("survivals", survivals.len()),
        ("e-values", e.len()),
    ] {
        if found != k {
            return Err(Error::DimensionMismatch {
                what,
                expected: k,
                found,
            });
        }
    }
    let mut transformed = Vec::with_capacity(k);
    for ((f, g), &x) in calibrators.iter().zip(survivals).zip(e.as_slice()) {
        if !g.has_full_support() {
            return Err(Error::Precondition(
                "survival function is not strictly decreasing".into(),
            ));
        }
        transformed.push(f.eval(g.survival(x)?)?);
    }
    lambda.merge(&transformed)
}

/// `e_i e_j / sigma_ij`.
pub fn product_merge(i: usize, j: usize, sigma: &SecondMomentBound, e: &EValueVector) -> Result<f64> {
    if sigma.arity() != e.len() {
        return Err(Error::DimensionMismatch {
            what: "sigma",
            expected: e.len(),
            found: sigma.arity(),
        });
    }
    let s = sigma
        .get(i, j)
        .ok_or_else(|| Error::invalid("index", format!("({i}, {j}) out of range")))?;
    if s <= 0.0 {
        return Err(Error::invalid(format!("sigma[{i}][{j}]"), "must be > 0 to divide by"));
    }
    let v = e.as_slice();
    Ok(v[i] * v[j] / s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "kebab-case")]
pub enum MixtureTerm {
    Weighted { lambda: Weights },
    Product { i: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub term: MixtureTerm,
}

/// Convex combination of weighted-average and product terms.
pub fn mixture_merge(
    components: &[MixtureComponent],
    sigma: &SecondMomentBound,
    e: &EValueVector,
) -> Result<f64> {
    if components.is_empty() {
        return Err(Error::invalid("components", "empty mixture"));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(
            "components",
            format!("weights must be >= 0 and sum to 1 (sum {total})"),
        ));
    }
    let mut out = 0.0;
    for c in components {
        let v = match &c.term {
            MixtureTerm::Weighted { lambda } => lambda.merge(e.as_slice())?,
            MixtureTerm::Product { i, j } => product_merge(*i, *j, sigma, e)?,
        };
        out += c.weight * v;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdenticalMerge {
    pub value: f64,
    /// All coordinates equal; otherwise the rule carries no guarantee.
    pub inside_subclass: bool,
}

/// `lambda + (1 - lambda) max(e)`.
pub fn identical_merge(lambda: f64, e: &EValueVector) -> Result<IdenticalMerge> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", format!("{lambda} is outside [0, 1]")));
    }
    let v = e.as_slice();
    Ok(IdenticalMerge {
        value: lambda + (1.0 - lambda) * e.max(),
        inside_subclass: v.iter().all(|&x| x == v[0]),
    })
}

/// `beta 1{max_k (e_1 + ... + e_k) / k >= beta}`.
pub fn exchangeable_merge(beta: f64, e: &EValueVector) -> Result<f64> {
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", format!("{beta} must be finite and > 1")));
    }
    Ok(if running_average_hits(beta, e.as_slice()) {
        beta
    } else {
        0.0
    })
}

pub(crate) fn running_average_hits(beta: f64, e: &[f64]) -> bool {
    let mut sum = 0.0;
    for (k, &x) in e.iter().enumerate() {
        sum += x;
        if sum >= beta * (k + 1) as f64 {
            return true;
        }
    }
    false
}
