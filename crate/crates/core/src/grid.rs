//! Candidate merging functions tabulated on a finite product grid in
//! `[0, theta]^K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances;

/// How to build one grid axis on `[0, theta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisSpec {
    /// Explicit points. Points above `theta` are dropped; 0, 1 and `theta`
    /// are inserted when missing.
    Points(Vec<f64>),
    /// `n` equally spaced points from 0 to `theta`, plus the point 1.
    Uniform(usize),
}

impl AxisSpec {
    pub fn build(&self, theta: f64) -> Result<Vec<f64>> {
        check_theta(theta)?;
        let mut points = match self {
            AxisSpec::Points(points) => {
                for (i, &p) in points.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::invalid(
                            format!("axis point {i}"),
                            format!("{p} is not a finite nonnegative number"),
                        ));
                    }
                }
                points.iter().copied().filter(|&p| p <= theta).collect()
            }
            AxisSpec::Uniform(n) => {
                if *n < 2 {
                    return Err(Error::invalid(
                        "uniform axis",
                        "needs at least 2 points",
                    ));
                }
                let step = theta / (*n - 1) as f64;
                (0..*n)
                    .map(|i| if i + 1 == *n { theta } else { i as f64 * step })
                    .collect::<Vec<_>>()
            }
        };
        points.extend([0.0, 1.0, theta]);
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(points)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !theta.is_finite() || theta < 1.0 {
        return Err(Error::invalid("theta", format!("{theta} must be finite and >= 1")));
    }
    Ok(())
}

/// An increasing function `F: [0, theta]^K -> R_+` known on a product grid.
///
/// Values are stored row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridFunction {
    theta: f64,
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    strides: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    theta: f64,
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl TryFrom<RawGrid> for GridFunction {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridFunction::new(raw.theta, raw.axes, raw.values)
    }
}

impl From<GridFunction> for RawGrid {
    fn from(g: GridFunction) -> Self {
        RawGrid {
            theta: g.theta,
            axes: g.axes,
            values: g.values,
        }
    }
}

fn strides_for(axes: &[Vec<f64>]) -> Vec<usize> {
    let mut strides = vec![1; axes.len()];
    for k in (0..axes.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * axes[k + 1].len();
    }
    strides
}

fn validate_axis(k: usize, axis: &[f64], theta: f64) -> Result<()> {
    let field = || format!("axes[{k}]");
    if axis.first() != Some(&0.0) {
        return Err(Error::invalid(field(), "must start at 0"));
    }
    if axis.last() != Some(&theta) {
        return Err(Error::invalid(field(), format!("must end at theta = {theta}")));
    }
    if !axis.contains(&1.0) {
        return Err(Error::invalid(field(), "must contain the point 1"));
    }
    if let Some(w) = axis.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(
            field(),
            format!("not strictly increasing at {} -> {}", w[0], w[1]),
        ));
    }
    Ok(())
}

impl GridFunction {
    /// Builds a grid function from explicit values, checking every type
    /// invariant (axis shape, finiteness, nonnegativity, monotonicity).
    pub fn new(theta: f64, axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        check_theta(theta)?;
        if axes.is_empty() {
            return Err(Error::invalid("axes", "need at least one axis"));
        }
        for (k, axis) in axes.iter().enumerate() {
            validate_axis(k, axis, theta)?;
        }
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "grid values",
                expected,
                found: values.len(),
            });
        }
        let strides = strides_for(&axes);
        let grid = Self {
            theta,
            axes,
            values,
            strides,
        };
        grid.check_values()?;
        Ok(grid)
    }

    fn check_values(&self) -> Result<()> {
        for (flat, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(
                    format!("value at {:?}", self.unravel(flat)),
                    format!("{v} is not a finite nonnegative number"),
                ));
            }
        }
        for k in 0..self.arity() {
            let stride = self.strides[k];
            for flat in 0..self.values.len() {
                let i = (flat / stride) % self.axes[k].len();
                if i + 1 == self.axes[k].len() {
                    continue;
                }
                let lo = self.values[flat];
                let hi = self.values[flat + stride];
                if hi < lo - tolerances::MONOTONICITY {
                    return Err(Error::NotMonotone {
                        axis: k,
                        lower: self.unravel(flat),
                        upper: self.unravel(flat + stride),
                        lower_value: lo,
                        upper_value: hi,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.axes.len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of product-grid nodes.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.arity()];
        for k in 0..self.arity() {
            index[k] = flat / self.strides[k];
            flat %= self.strides[k];
        }
        index
    }

    pub fn value_at(&self, index: &[usize]) -> f64 {
        self.values[self.flat_index(index)]
    }

    /// Coordinates of the node with the given multi-index.
    pub fn node(&self, index: &[usize]) -> Vec<f64> {
        index
            .iter()
            .enumerate()
            .map(|(k, &i)| self.axes[k][i])
            .collect()
    }

    /// Position of `x` on axis `k`, matching up to a relative 1e-12.
    pub fn axis_index(&self, k: usize, x: f64) -> Option<usize> {
        let tol = tolerances::ARITHMETIC * x.abs().max(1.0);
        let axis = &self.axes[k];
        let pos = axis.partition_point(|&p| p < x - tol);
        (pos < axis.len() && (axis[pos] - x).abs() <= tol).then_some(pos)
    }

    /// Value at a point lying on the grid, or `None` when any coordinate is
    /// off-grid.
    pub fn lookup(&self, point: &[f64]) -> Option<f64> {
        if point.len() != self.arity() {
            return None;
        }
        let mut flat = 0;
        for (k, &x) in point.iter().enumerate() {
            flat += self.axis_index(k, x)? * self.strides[k];
        }
        Some(self.values[flat])
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `c * F` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid("scale", format!("{c} must be positive")));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        })
    }

    /// True when every axis is the same grid and values are invariant under
    /// coordinate permutations.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.axes.iter().any(|a| a != &self.axes[0]) {
            return false;
        }
        (0..self.len()).all(|flat| {
            let mut index = self.unravel(flat);
            index.sort_unstable();
            (self.value_at(&index) - self.values[flat]).abs() <= tol
        })
    }
}

/// Tabulates `f` on the product of the given axes.
///
/// Monotonicity violations beyond 1e-9 are reported with the witnessing
/// pair of nodes; nothing is repaired.
pub fn grid_sample<F>(f: F, theta: f64, resolution: &[AxisSpec]) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> f64,
{
    let axes = resolution
        .iter()
        .map(|spec| spec.build(theta))
        .collect::<Result<Vec<_>>>()?;
    let strides = strides_for(&axes);
    let len: usize = axes.iter().map(Vec::len).product();
    let mut values = Vec::with_capacity(len);
    let mut point = vec![0.0; axes.len()];
    for flat in 0..len {
        let mut rest = flat;
        for k in 0..axes.len() {
            point[k] = axes[k][rest / strides[k]];
            rest %= strides[k];
        }
        values.push(f(&point));
    }
    GridFunction::new(theta, axes, values)
}
