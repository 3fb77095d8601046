//! Extracting a weighted-average majorant from a valid merging function.
//!
//! For a grid function `F` that is valid against every e-variable law on
//! the grid, [`dominate`] finds nonnegative `phi_1, ..., phi_K` with
//! `phi_1 (+) ... (+) phi_K >= F` and `sum_k T(phi_k) <= 1 + eps`, bounds
//! each `phi_k` by an affine function `T(phi_k) (1 - h_k + h_k x)` and
//! reads off `lambda` with `F <= (1 + eps) M_lambda`.

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::lp::{LinearProgram, Relation, Sense, SimplexOptions};
use crate::merge::{structural_upper_check, EValueVector, StructuralCheck};
use crate::tolerances;
use crate::transport::{binary_adversary, worst_case_expectation_with, TransportCertificate};
use crate::weights::Weights;

/// A function on a strictly increasing grid of nonnegative points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFunction {
    points: Vec<f64>,
    values: Vec<f64>,
}

impl UnivariateFunction {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("points", "grid is empty"));
        }
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                what: "univariate values",
                expected: points.len(),
                found: values.len(),
            });
        }
        if points.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("points", "must be finite and nonnegative"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("points", "must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        Ok(Self { points, values })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn theta(&self) -> f64 {
        *self.points.last().expect("nonempty")
    }

    fn expect(&self, law: &DiscreteDistribution) -> f64 {
        law.expect(|x| {
            let i = self
                .points
                .iter()
                .position(|&p| p == x)
                .expect("law is supported on the grid");
            self.values[i]
        })
    }
}

/// `T(phi)` and a one- or two-point law attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanBound {
    pub value: f64,
    pub law: DiscreteDistribution,
}

/// `max E[phi(X)]` over laws on the grid with `E[X] <= 1`.
///
/// The feasible set has one moment constraint, so its extreme points are
/// point masses at `x <= 1` and pairs `x < 1 < y` mixed to mean exactly 1;
/// both families are enumerated.
pub fn sup_mean_constrained(phi: &UnivariateFunction) -> Result<MeanBound> {
    let pts = phi.points();
    let vals = phi.values();
    let mut best: Option<(f64, usize, usize, f64)> = None;
    let mut consider = |value: f64, lo: usize, hi: usize, p_hi: f64| {
        if best.is_none_or(|b| value > b.0) {
            best = Some((value, lo, hi, p_hi));
        }
    };
    for (i, &x) in pts.iter().enumerate() {
        if x <= 1.0 {
            consider(vals[i], i, i, 0.0);
        }
    }
    for (i, &x) in pts.iter().enumerate().filter(|(_, &x)| x < 1.0) {
        for (j, &y) in pts.iter().enumerate().filter(|(_, &y)| y > 1.0) {
            let p = (1.0 - x) / (y - x);
            consider(p * vals[j] + (1.0 - p) * vals[i], i, j, p);
        }
    }
    let (value, lo, hi, p) = best.ok_or_else(|| {
        Error::invalid("grid", "no point <= 1, so no e-variable law lives on it")
    })?;
    let law = if lo == hi {
        DiscreteDistribution::point_mass(pts[lo])?
    } else {
        DiscreteDistribution::new(vec![pts[lo], pts[hi]], vec![1.0 - p, p])?
    };
    Ok(MeanBound { value, law })
}

/// An affine bound `g(x) <= r (1 - h + h x)` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorantResult {
    pub r: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub h: f64,
    pub theta: f64,
}

impl MajorantResult {
    pub fn bound(&self, x: f64) -> f64 {
        self.r * (1.0 - self.h + self.h * x)
    }
}

/// Computes the interval `[h_min, h_max]` of slopes for which
/// `g(x) <= r (1 - h + h x)` holds on the grid and returns `h = h_min`.
///
/// The interval is nonempty whenever `sup_mean_constrained(g) <= r`. If
/// it is empty, the error carries a mean-1 law under which `E[g] > r`.
pub fn linear_majorant(g: &UnivariateFunction, r: f64) -> Result<MajorantResult> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::invalid("r", format!("{r} must be finite and >= 0")));
    }
    if let Some(v) = g.values().iter().find(|v| **v < 0.0) {
        return Err(Error::invalid("g", format!("value {v} is negative")));
    }
    let theta = g.theta();
    if r == 0.0 {
        if g.values().iter().any(|&v| v > tolerances::ARITHMETIC) {
            let best = sup_mean_constrained(g)?;
            return Err(Error::MajorantInfeasible {
                bound: 0.0,
                expectation: best.value,
                adversary: best.law,
            });
        }
        return Ok(MajorantResult {
            r,
            h_min: 0.0,
            h_max: 1.0,
            h: 0.0,
            theta,
        });
    }

    let pts = g.points();
    let vals = g.values();
    // Raw slope limits before clamping to [0, 1].
    let mut upper = (f64::INFINITY, None);
    let mut lower = (f64::NEG_INFINITY, None);
    let mut at_one_ok = true;
    for (i, (&x, &v)) in pts.iter().zip(vals).enumerate() {
        let ratio = v / r;
        if x < 1.0 {
            let s = (1.0 - ratio) / (1.0 - x);
            if s < upper.0 {
                upper = (s, Some(i));
            }
        } else if x > 1.0 {
            let s = (ratio - 1.0) / (x - 1.0);
            if s > lower.0 {
                lower = (s, Some(i));
            }
        } else if ratio > 1.0 + tolerances::MAJORANT {
            at_one_ok = false;
        }
    }
    let h_max = upper.0.min(1.0);
    let h_min = lower.0.max(0.0);
    if h_min > h_max + tolerances::MAJORANT || !at_one_ok {
        return Err(majorant_adversary(g, r, upper.1, lower.1));
    }
    let h = h_min.min(1.0);
    let result = MajorantResult {
        r,
        h_min,
        h_max,
        h,
        theta,
    };
    for (&x, &v) in pts.iter().zip(vals) {
        let slack = result.bound(x) - v;
        if slack < -tolerances::MAJORANT * r.max(1.0) {
            return Err(Error::Consistency(format!(
                "majorant misses g at x = {x} by {}",
                -slack
            )));
        }
    }
    Ok(result)
}

/// Picks the best of the candidate counterexamples: the pair mixing the
/// witnessing `x0 < 1` and `y0 > 1` to mean 1, point masses at `x0` and 1,
/// and the pair `{0, y0}`.
fn majorant_adversary(
    g: &UnivariateFunction,
    r: f64,
    x0: Option<usize>,
    y0: Option<usize>,
) -> Error {
    let pts = g.points();
    let mut candidates = Vec::new();
    if let Some(i) = x0 {
        candidates.push(DiscreteDistribution::point_mass(pts[i]));
        if let Some(j) = y0 {
            candidates.push(DiscreteDistribution::mean_one_pair(pts[i], pts[j]));
        }
    }
    if let Some(j) = y0 {
        if pts[0] < 1.0 {
            candidates.push(DiscreteDistribution::mean_one_pair(pts[0], pts[j]));
        }
    }
    if pts.contains(&1.0) {
        candidates.push(DiscreteDistribution::point_mass(1.0));
    }
    let best = candidates
        .into_iter()
        .flatten()
        .map(|law| (g.expect(&law), law))
        .fold(None::<(f64, DiscreteDistribution)>, |acc, c| match acc {
            Some(a) if a.0 >= c.0 => Some(a),
            _ => Some(c),
        });
    match best {
        Some((expectation, adversary)) => Error::MajorantInfeasible {
            bound: r,
            expectation,
            adversary,
        },
        None => Error::Precondition("no feasible law on the grid".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisMajorant {
    /// `T(phi_k)`.
    pub t: f64,
    pub h: f64,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub lambda: Weights,
    pub epsilon: f64,
    pub theta: f64,
    /// `max_x F(x) - (1 + eps) M_lambda(x)` over the grid.
    pub max_violation: f64,
    pub per_k: Vec<AxisMajorant>,
    /// Optimal value of the joint LP, `min sum_k T(phi_k)`.
    pub lp_value: f64,
    /// `sum_k T(phi_k)` recomputed from the extracted duals.
    pub sum_t: f64,
    pub symmetrized: bool,
    pub dual: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominateOptions {
    /// Average the dual components over coordinates (symmetric `F` only),
    /// so that all input weights come out equal.
    pub symmetrize: bool,
    /// Validity threshold: the joint LP value may exceed 1 by at most this.
    pub verdict_tol: f64,
    pub simplex: SimplexOptions,
}

impl Default for DominateOptions {
    fn default() -> Self {
        Self {
            symmetrize: false,
            verdict_tol: tolerances::LP_VERDICT,
            simplex: SimplexOptions::default(),
        }
    }
}

/// The extreme e-variable laws on one axis: point masses at points `<= 1`
/// and mean-1 pairs straddling 1.
pub fn extreme_e_laws(axis: &[f64]) -> Vec<DiscreteDistribution> {
    let mut laws = Vec::new();
    for &x in axis.iter().filter(|&&x| x <= 1.0) {
        laws.push(DiscreteDistribution::point_mass(x).expect("valid point mass"));
    }
    for &x in axis.iter().filter(|&&x| x < 1.0) {
        for &y in axis.iter().filter(|&&y| y > 1.0) {
            laws.push(DiscreteDistribution::mean_one_pair(x, y).expect("x < 1 < y"));
        }
    }
    laws
}

pub fn dominate(f: &GridFunction, epsilon: f64) -> Result<DominationReport> {
    dominate_with(f, epsilon, &DominateOptions::default())
}

pub fn dominate_with(
    f: &GridFunction,
    epsilon: f64,
    options: &DominateOptions,
) -> Result<DominationReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be positive")));
    }
    if options.symmetrize && f.axes().iter().any(|a| a != f.axis(0)) {
        return Err(Error::Precondition(
            "symmetrized domination needs identical axes".into(),
        ));
    }
    if let StructuralCheck::Violation { point, .. } = structural_upper_check(f) {
        return Err(structural_counterexample(f, &point, &options.simplex));
    }

    // Step 1: min sum_k T(phi_k), solved through its dual over couplings
    // whose marginals are mixtures of extreme e-laws.
    let k_dim = f.arity();
    let families: Vec<Vec<DiscreteDistribution>> =
        f.axes().iter().map(|a| extreme_e_laws(a)).collect();
    let n_pi = f.len();
    let mut w_offset = Vec::with_capacity(k_dim);
    let mut n_vars = n_pi;
    for fam in &families {
        w_offset.push(n_vars);
        n_vars += fam.len();
    }
    let mut objective = vec![0.0; n_vars];
    objective[..n_pi].copy_from_slice(f.values());
    let mut lp = LinearProgram::new(Sense::Maximize, objective);

    let mut axis_rows: Vec<Vec<Vec<(usize, f64)>>> =
        f.axes().iter().map(|a| vec![Vec::new(); a.len()]).collect();
    for flat in 0..n_pi {
        for (k, &i) in f.unravel(flat).iter().enumerate() {
            axis_rows[k][i].push((flat, 1.0));
        }
    }
    for (k, fam) in families.iter().enumerate() {
        for (l, law) in fam.iter().enumerate() {
            for (&a, &p) in law.atoms().iter().zip(law.probs()) {
                let i = f.axis_index(k, a).expect("law built from the axis");
                axis_rows[k][i].push((w_offset[k] + l, -p));
            }
        }
    }
    let mut phi_rows: Vec<Vec<usize>> = Vec::with_capacity(k_dim);
    for rows in &axis_rows {
        phi_rows.push(
            rows.iter()
                .map(|coeffs| lp.add_constraint(coeffs, Relation::Le, 0.0))
                .collect(),
        );
    }
    for (k, fam) in families.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = (0..fam.len()).map(|l| (w_offset[k] + l, 1.0)).collect();
        lp.add_constraint(&coeffs, Relation::Le, 1.0);
    }
    let solution = lp.solve(&options.simplex)?;
    let lp_value = solution.objective;

    if lp_value > 1.0 + options.verdict_tol.min(epsilon) {
        let marginals = certifying_marginals(f, &families, &w_offset, &solution.primal)?;
        let certificate = worst_case_expectation_with(f, &marginals, &options.simplex)?;
        return Err(Error::NotValid {
            certificate: Box::new(certificate),
        });
    }

    let mut phi: Vec<Vec<f64>> = phi_rows
        .iter()
        .map(|rows| rows.iter().map(|&r| solution.dual[r].max(0.0)).collect())
        .collect();
    if options.symmetrize {
        let n = phi[0].len();
        let avg: Vec<f64> = (0..n)
            .map(|i| phi.iter().map(|p| p[i]).sum::<f64>() / k_dim as f64)
            .collect();
        phi = vec![avg; k_dim];
    }

    // Step 2: T(phi_k) and the smallest feasible slope for each component.
    let mut per_k = Vec::with_capacity(k_dim);
    for (k, p) in phi.iter().enumerate() {
        let g = UnivariateFunction::new(f.axis(k).to_vec(), p.clone())?;
        let t = sup_mean_constrained(&g)?.value;
        let m = linear_majorant(&g, t)?;
        per_k.push(AxisMajorant {
            t,
            h: m.h,
            h_min: m.h_min,
            h_max: m.h_max,
        });
    }
    let sum_t: f64 = per_k.iter().map(|a| a.t).sum();

    // Step 3: lambda_k = T_k h_k / (1 + eps), remainder on the constant.
    let scale = 1.0 + epsilon;
    let mut inputs: Vec<f64> = per_k.iter().map(|a| (a.t * a.h / scale).max(0.0)).collect();
    let used: f64 = inputs.iter().sum();
    if used > 1.0 {
        inputs.iter_mut().for_each(|w| *w /= used);
    }
    let lambda = Weights::from_inputs(&inputs)?;

    // Step 4: certify F <= (1 + eps) M_lambda on the whole grid.
    let max_violation = (0..f.len())
        .map(|flat| {
            let x = f.node(&f.unravel(flat));
            f.values()[flat] - scale * lambda.apply(&x)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if max_violation > tolerances::DOMINATION_VIOLATION {
        return Err(Error::Consistency(format!(
            "F exceeds (1 + eps) M_lambda by {max_violation}"
        )));
    }
    Ok(DominationReport {
        lambda,
        epsilon,
        theta: f.theta(),
        max_violation,
        per_k,
        lp_value,
        sum_t,
        symmetrized: options.symmetrize,
        dual: phi,
    })
}

/// Marginals `nu_k = sum_l w_kl mu_l + (1 - sum_l w_kl) delta_0` read off
/// the joint LP's optimal mixture weights.
fn certifying_marginals(
    f: &GridFunction,
    families: &[Vec<DiscreteDistribution>],
    w_offset: &[usize],
    primal: &[f64],
) -> Result<Vec<DiscreteDistribution>> {
    families
        .iter()
        .enumerate()
        .map(|(k, fam)| {
            let axis = f.axis(k);
            let mut probs = vec![0.0; axis.len()];
            let mut used = 0.0;
            for (l, law) in fam.iter().enumerate() {
                let w = primal[w_offset[k] + l];
                used += w;
                for (&a, &p) in law.atoms().iter().zip(law.probs()) {
                    probs[f.axis_index(k, a).expect("on axis")] += w * p;
                }
            }
            probs[0] += (1.0 - used).max(0.0);
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            Ok(DiscreteDistribution::new(axis.to_vec(), probs)?.pruned())
        })
        .collect()
}

/// Certificate for a node with `F(e) > 1 v max(e)`: the two-point
/// adversary when `max(e) > 1`, constant e-variables otherwise.
fn structural_counterexample(f: &GridFunction, point: &[f64], simplex: &SimplexOptions) -> Error {
    let marginals = if point.iter().any(|&x| x > 1.0) {
        EValueVector::new(point.to_vec())
            .and_then(|e| binary_adversary(f, &e))
            .map(|adv| adv.marginals)
    } else {
        point
            .iter()
            .map(|&x| DiscreteDistribution::point_mass(x))
            .collect()
    };
    match marginals.and_then(|ms| worst_case_expectation_with(f, &ms, simplex)) {
        Ok(certificate) => Error::NotValid {
            certificate: Box::new(certificate),
        },
        Err(e) => e,
    }
}

/// Convenience wrapper used by reports: the certificate inside a
/// [`Error::NotValid`].
pub fn invalidity_certificate(err: &Error) -> Option<&TransportCertificate> {
    match err {
        Error::NotValid { certificate } => Some(certificate),
        _ => None,
    }
}
