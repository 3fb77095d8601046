//! Calibrators (decreasing `f` on `[0, 1]` with unit integral) and the
//! marginal survival functions they are composed with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on `int_0^1 f` when checked by quadrature.
pub const NORMALIZATION_SLACK: f64 = 1e-3;
pub const DEFAULT_CAP: f64 = 1e6;

/// Nodes used for the quadrature check; graded towards 0 where `f` blows up.
const QUADRATURE_NODES: usize = 4000;

fn default_cap() -> Option<f64> {
    Some(DEFAULT_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum CalibratorShape {
    /// `f = 1`.
    Constant,
    /// `f(p) = kappa p^(kappa - 1)` for `kappa` in `(0, 1]`.
    Power { kappa: f64 },
    /// `f(p) = -ln p`.
    NegLog,
    /// Piecewise linear through `(points, values)`; `points` spans `[0, 1]`.
    Table { points: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalibrator", into = "RawCalibrator")]
pub struct Calibrator {
    shape: CalibratorShape,
    cap: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCalibrator {
    #[serde(flatten)]
    shape: CalibratorShape,
    #[serde(default = "default_cap")]
    cap: Option<f64>,
}

impl TryFrom<RawCalibrator> for Calibrator {
    type Error = Error;

    fn try_from(raw: RawCalibrator) -> Result<Self> {
        Calibrator::new(raw.shape, raw.cap)
    }
}

impl From<Calibrator> for RawCalibrator {
    fn from(c: Calibrator) -> Self {
        RawCalibrator {
            shape: c.shape,
            cap: c.cap,
        }
    }
}

impl Calibrator {
    /// `cap` stands in for `f(0) = inf`; `None` makes `f(0)` a domain error
    /// for the unbounded shapes.
    pub fn new(shape: CalibratorShape, cap: Option<f64>) -> Result<Self> {
        if let Some(c) = cap {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid("cap", format!("{c} is not finite and > 0")));
            }
        }
        match &shape {
            CalibratorShape::Constant | CalibratorShape::NegLog => {}
            CalibratorShape::Power { kappa } => {
                if !(*kappa > 0.0 && *kappa <= 1.0) {
                    return Err(Error::invalid("kappa", format!("{kappa} is outside (0, 1]")));
                }
            }
            CalibratorShape::Table { points, values } => validate_table(points, values)?,
        }
        let c = Self { shape, cap };
        let integral = c.integral();
        if integral > 1.0 + NORMALIZATION_SLACK {
            return Err(Error::invalid(
                "calibrator",
                format!("integral {integral} exceeds 1"),
            ));
        }
        Ok(c)
    }

    pub fn with_default_cap(shape: CalibratorShape) -> Result<Self> {
        Self::new(shape, Some(DEFAULT_CAP))
    }

    pub fn shape(&self) -> &CalibratorShape {
        &self.shape
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    fn raw(&self, p: f64) -> f64 {
        match &self.shape {
            CalibratorShape::Constant => 1.0,
            CalibratorShape::Power { kappa } => kappa * p.powf(kappa - 1.0),
            CalibratorShape::NegLog => -p.ln(),
            CalibratorShape::Table { points, values } => interpolate(points, values, p),
        }
    }

    /// `f(p)`, truncated at the cap.
    pub fn eval(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("p", format!("{p} is outside [0, 1]")));
        }
        let v = self.raw(p);
        match self.cap {
            Some(cap) => Ok(if v.is_finite() { v.min(cap) } else { cap }),
            None if v.is_finite() => Ok(v),
            None => Err(Error::Precondition(format!(
                "calibrator is unbounded at p = {p} and has no cap"
            ))),
        }
    }

    /// Trapezoid rule on `p_i = (i / n)^4` of the (capped) calibrator.
    pub fn integral(&self) -> f64 {
        let n = QUADRATURE_NODES;
        let node = |i: usize| (i as f64 / n as f64).powi(4);
        let value = |p: f64| {
            let v = self.raw(p);
            let v = if v.is_finite() { v } else { f64::INFINITY };
            match self.cap {
                Some(cap) => v.min(cap),
                None => v,
            }
        };
        let mut total = 0.0;
        let mut prev = (node(0), value(node(0)));
        if !prev.1.is_finite() {
            // Uncapped singularity at 0: integrate from the first node.
            prev = (node(1), value(node(1)));
            total += prev.1 * prev.0;
        }
        for i in 1..=n {
            let p = node(i);
            if p <= prev.0 {
                continue;
            }
            let v = value(p);
            total += 0.5 * (p - prev.0) * (v + prev.1);
            prev = (p, v);
        }
        total
    }
}

fn validate_table(points: &[f64], values: &[f64]) -> Result<()> {
    if points.len() < 2 || points.len() != values.len() {
        return Err(Error::invalid(
            "table",
            "need at least two points and one value per point",
        ));
    }
    if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
        return Err(Error::invalid("table.points", "must start at 0 and end at 1"));
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("table.points", "not strictly increasing"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("table.values", "must be finite and >= 0"));
    }
    if let Some(i) = values.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::invalid(
            "table.values",
            format!("increases between p = {} and p = {}", points[i], points[i + 1]),
        ));
    }
    Ok(())
}

fn interpolate(points: &[f64], values: &[f64], x: f64) -> f64 {
    let last = points.len() - 1;
    if x >= points[last] {
        return values[last];
    }
    let i = points.partition_point(|&p| p <= x).saturating_sub(1);
    let t = (x - points[i]) / (points[i + 1] - points[i]);
    values[i] + t * (values[i + 1] - values[i])
}

/// Law of one input, given by its survival function `g(x) = P(E > x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum MarginalModel {
    /// Exponential with mean `1 / rate`.
    Exponential { rate: f64 },
    /// Piecewise linear survival on `points = [0, ..., theta]`.
    Table { points: Vec<f64>, survival: Vec<f64> },
}

impl MarginalModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarginalModel::Exponential { rate } => {
                if !(rate.is_finite() && *rate >= 1.0) {
                    return Err(Error::invalid(
                        "rate",
                        format!("{rate} gives a mean above 1"),
                    ));
                }
            }
            MarginalModel::Table { points, survival } => {
                if points.len() < 2 || points.len() != survival.len() {
                    return Err(Error::invalid(
                        "survival",
                        "need at least two points and one value per point",
                    ));
                }
                if points[0] != 0.0 || points.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid(
                        "survival.points",
                        "must start at 0 and be strictly increasing",
                    ));
                }
                if survival[0] != 1.0 {
                    return Err(Error::invalid("survival", "g(0) must be 1"));
                }
                if survival.iter().any(|s| !(0.0..=1.0).contains(s))
                    || survival.windows(2).any(|w| w[1] > w[0])
                {
                    return Err(Error::invalid("survival", "must be nonincreasing in [0, 1]"));
                }
                let mean = self.mean();
                if mean > 1.0 + crate::tolerances::ARITHMETIC {
                    return Err(Error::invalid("survival", format!("mean {mean} exceeds 1")));
                }
            }
        }
        Ok(())
    }

    /// `E[X] = int_0^theta g`.
    pub fn mean(&self) -> f64 {
        match self {
            MarginalModel::Exponential { rate } => 1.0 / rate,
            MarginalModel::Table { points, survival } => points
                .windows(2)
                .zip(survival.windows(2))
                .map(|(x, s)| 0.5 * (x[1] - x[0]) * (s[0] + s[1]))
                .sum(),
        }
    }

    pub fn theta(&self) -> f64 {
        match self {
            MarginalModel::Exponential { .. } => f64::INFINITY,
            MarginalModel::Table { points, .. } => *points.last().unwrap(),
        }
    }

    /// Strictly decreasing on its support, the discrete stand-in for a
    /// continuous law with full support.
    pub fn has_full_support(&self) -> bool {
        match self {
            MarginalModel::Exponential { .. } => true,
            MarginalModel::Table { survival, .. } => survival.windows(2).all(|w| w[1] < w[0]),
        }
    }

    pub fn survival(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x <= self.theta()) {
            return Err(Error::invalid(
                "e",
                format!("{x} is outside [0, {}]", self.theta()),
            ));
        }
        Ok(match self {
            MarginalModel::Exponential { rate } => (-rate * x).exp(),
            MarginalModel::Table { points, survival } => interpolate(points, survival, x),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shapes_integrate_to_one() {
        for shape in [
            CalibratorShape::Constant,
            CalibratorShape::Power { kappa: 0.5 },
            CalibratorShape::NegLog,
        ] {
            let c = Calibrator::with_default_cap(shape.clone()).unwrap();
            let i = c.integral();
            assert!((i - 1.0).abs() < 1e-3, "{shape:?}: {i}");
        }
    }

    #[test]
    fn cap_removes_mass_near_zero() {
        // Capped at c, kappa p^(kappa-1) loses p*^kappa - c p* below
        // p* = (c / kappa)^(1 / (kappa - 1)).
        let (kappa, cap) = (0.1f64, DEFAULT_CAP);
        let p_star = (cap / kappa).powf(1.0 / (kappa - 1.0));
        let want = 1.0 - p_star.powf(kappa) + cap * p_star;
        let c = Calibrator::with_default_cap(CalibratorShape::Power { kappa }).unwrap();
        assert!((c.integral() - want).abs() < 1e-3, "{} vs {want}", c.integral());
        assert!(want < 0.9);
    }

    #[test]
    fn rejects_oversized_and_increasing() {
        let table = |values: Vec<f64>| CalibratorShape::Table {
            points: vec![0.0, 0.5, 1.0],
            values,
        };
        assert!(Calibrator::with_default_cap(table(vec![2.0, 1.0, 0.0])).is_ok());
        assert!(Calibrator::with_default_cap(table(vec![3.0, 1.0, 0.0])).is_err());
        assert!(Calibrator::with_default_cap(table(vec![0.5, 1.0, 0.5])).is_err());
        assert!(Calibrator::with_default_cap(CalibratorShape::Power { kappa: 1.5 }).is_err());
    }

    #[test]
    fn cap_replaces_infinity() {
        let c = Calibrator::with_default_cap(CalibratorShape::NegLog).unwrap();
        assert_eq!(c.eval(0.0).unwrap(), DEFAULT_CAP);
        assert_eq!(c.eval(1.0).unwrap(), 0.0);
        let uncapped = Calibrator::new(CalibratorShape::NegLog, None).unwrap();
        assert!(matches!(uncapped.eval(0.0), Err(Error::Precondition(_))));
        assert!((uncapped.eval(0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn serde_defaults_cap() {
        let c: Calibrator = serde_json::from_str(r#"{"shape":"power","kappa":0.5}"#).unwrap();
        assert_eq!(c.cap(), Some(DEFAULT_CAP));
        let back: Calibrator = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<Calibrator>(r#"{"shape":"power","kappa":2}"#).is_err());
    }

    #[test]
    fn survival_tables() {
        let g = MarginalModel::Table {
            points: vec![0.0, 1.0, 2.0],
            survival: vec![1.0, 0.5, 0.0],
        };
        g.validate().unwrap();
        assert!((g.mean() - 1.0).abs() < 1e-15);
        assert!(g.has_full_support());
        assert_eq!(g.survival(1.5).unwrap(), 0.25);
        assert!(g.survival(2.5).is_err());

        let flat = MarginalModel::Table {
            points: vec![0.0, 0.5, 1.0],
            survival: vec![1.0, 1.0, 0.0],
        };
        flat.validate().unwrap();
        assert!(!flat.has_full_support());

        let heavy = MarginalModel::Table {
            points: vec![0.0, 3.0],
            survival: vec![1.0, 0.5],
        };
        assert!(heavy.validate().is_err());
        assert!(MarginalModel::Exponential { rate: 0.5 }.validate().is_err());
    }
}
