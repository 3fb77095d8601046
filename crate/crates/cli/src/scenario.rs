//! Scenario files: one JSON object tagged by `kind`.

use emerge_core::distribution::DiscreteDistribution;
use emerge_core::grid::{grid_sample, AxisSpec, GridFunction};
use emerge_core::subclasses::{exchangeable_merge, identical_merge, Rule, Sampler};
use emerge_core::merge::EValueVector;
use emerge_core::weights::Weights;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scenario {
    Merge {
        rule: Rule,
        points: Vec<Vec<f64>>,
    },
    Validity {
        grid: GridSpec,
        marginals: Vec<DiscreteDistribution>,
        #[serde(default)]
        tol: Option<f64>,
    },
    Dominate {
        grid: GridSpec,
        epsilon: f64,
        #[serde(default)]
        symmetrize: bool,
        #[serde(default)]
        tol: Option<f64>,
    },
    Duality {
        grid: GridSpec,
        marginals: Vec<DiscreteDistribution>,
    },
    Simulate {
        rule: Rule,
        sampler: Sampler,
        #[serde(default)]
        reps: Option<u64>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_bound")]
        bound: f64,
        /// Runs the full-support check of `rule` against this candidate.
        #[serde(default)]
        improvement: Option<Rule>,
        /// Grid search for points where the rule and `M_lambda` disagree
        /// in both directions (running-average rule only).
        #[serde(default)]
        incomparability: Option<IncomparabilitySpec>,
    },
    OracleCheck {
        grid: GridSpec,
        marginals: Vec<DiscreteDistribution>,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
}

fn default_bound() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    8
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Merge { .. } => "merge",
            Scenario::Validity { .. } => "validity",
            Scenario::Dominate { .. } => "dominate",
            Scenario::Duality { .. } => "duality",
            Scenario::Simulate { .. } => "simulate",
            Scenario::OracleCheck { .. } => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomparabilitySpec {
    pub lambda: Weights,
    pub axis: Vec<f64>,
}

/// A grid function, either given node by node or sampled from a formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    Explicit { grid: GridFunction },
    Sampled {
        function: FunctionSpec,
        theta: f64,
        axes: Vec<AxisSpec>,
    },
}

impl GridSpec {
    pub fn build(&self) -> Result<GridFunction, CliError> {
        match self {
            GridSpec::Explicit { grid } => Ok(grid.clone()),
            GridSpec::Sampled {
                function,
                theta,
                axes,
            } => function.sample(*theta, axes),
        }
    }

    /// The same formula on axes truncated or rebuilt at another `theta`.
    pub fn at_theta(&self, theta: f64) -> Result<GridFunction, CliError> {
        match self {
            GridSpec::Sampled { function, axes, .. } => function.sample(theta, axes),
            GridSpec::Explicit { .. } => Err(CliError::input(
                "grid.source",
                "a theta ladder needs a sampled grid",
            )),
        }
    }

    pub fn function(&self) -> Option<&FunctionSpec> {
        match self {
            GridSpec::Sampled { function, .. } => Some(function),
            GridSpec::Explicit { .. } => None,
        }
    }
}

/// Closed-form merging functions that can be sampled onto a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Weighted { lambda: Weights },
    MinOfWeighted { lambdas: Vec<Weights> },
    Max,
    Min,
    Product,
    Identical { lambda: f64 },
    Exchangeable { beta: f64 },
}

impl FunctionSpec {
    pub fn weights(&self) -> Option<&Weights> {
        match self {
            FunctionSpec::Weighted { lambda } => Some(lambda),
            _ => None,
        }
    }

    fn sample(&self, theta: f64, axes: &[AxisSpec]) -> Result<GridFunction, CliError> {
        let k = axes.len();
        let check = |w: &Weights| {
            if w.arity() == k {
                Ok(())
            } else {
                Err(CliError::input(
                    "grid.function.lambda",
                    format!("has {} input weights but the grid has {k} axes", w.arity()),
                ))
            }
        };
        match self {
            FunctionSpec::Weighted { lambda } => check(lambda)?,
            FunctionSpec::MinOfWeighted { lambdas } => {
                if lambdas.is_empty() {
                    return Err(CliError::input("grid.function.lambdas", "empty list"));
                }
                lambdas.iter().try_for_each(check)?;
            }
            FunctionSpec::Identical { lambda } if !(0.0..=1.0).contains(lambda) => {
                return Err(CliError::input("grid.function.lambda", "outside [0, 1]"));
            }
            FunctionSpec::Exchangeable { beta } if !(*beta > 1.0) => {
                return Err(CliError::input("grid.function.beta", "must be > 1"));
            }
            _ => {}
        }
        let eval = |e: &[f64]| -> f64 {
            match self {
                FunctionSpec::Weighted { lambda } => lambda.merge(e).unwrap_or(f64::NAN),
                FunctionSpec::MinOfWeighted { lambdas } => lambdas
                    .iter()
                    .map(|w| w.merge(e).unwrap_or(f64::NAN))
                    .fold(f64::INFINITY, f64::min),
                FunctionSpec::Max => e.iter().copied().fold(0.0, f64::max),
                FunctionSpec::Min => e.iter().copied().fold(f64::INFINITY, f64::min),
                FunctionSpec::Product => e.iter().product(),
                FunctionSpec::Identical { lambda } => EValueVector::new(e.to_vec())
                    .and_then(|v| identical_merge(*lambda, &v))
                    .map_or(f64::NAN, |r| r.value),
                FunctionSpec::Exchangeable { beta } => EValueVector::new(e.to_vec())
                    .and_then(|v| exchangeable_merge(*beta, &v))
                    .unwrap_or(f64::NAN),
            }
        };
        Ok(grid_sample(eval, theta, axes)?)
    }
}
