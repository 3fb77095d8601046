//! Discrete multi-marginal optimal transport over e-variable marginals.
//!
//! The primal LP maximizes `E_pi[F]` over couplings `pi` of fixed marginals;
//! its dual minimizes `sum_k E_{mu_k}[phi_k]` over separable majorants
//! `phi_1 (+) ... (+) phi_K >= F`. Both sides are returned in a
//! [`TransportCertificate`] so the duality gap can be checked independently.

use serde::{Deserialize, Serialize};

use crate::distribution::{Coupling, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::lp::{LinearProgram, LpError, Relation, Sense, SimplexOptions};
use crate::merge::EValueVector;
use crate::tolerances;

/// Largest number of joint atoms materialized in a single transport LP.
pub const MAX_JOINT_ATOMS: usize = 20_000;

/// `K` univariate functions stored on the axes of a reference grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableDual {
    pub phi: Vec<Vec<f64>>,
    /// Set once the components are known to lie in `[0, 1]`.
    pub normalized: bool,
}

impl SeparableDual {
    pub fn new(phi: Vec<Vec<f64>>, f: &GridFunction) -> Result<Self> {
        if phi.len() != f.arity() {
            return Err(Error::DimensionMismatch {
                what: "dual components",
                expected: f.arity(),
                found: phi.len(),
            });
        }
        for (k, p) in phi.iter().enumerate() {
            if p.len() != f.axis(k).len() {
                return Err(Error::DimensionMismatch {
                    what: "dual component length",
                    expected: f.axis(k).len(),
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("phi[{k}]"), "non-finite value"));
            }
        }
        Ok(Self {
            phi,
            normalized: false,
        })
    }

    pub fn arity(&self) -> usize {
        self.phi.len()
    }

    /// `sum_k phi_k(x_k)` at the node with the given multi-index.
    pub fn sum_at(&self, index: &[usize]) -> f64 {
        index.iter().zip(&self.phi).map(|(&i, p)| p[i]).sum()
    }

    /// Largest `F(x) - sum_k phi_k(x_k)` over the grid, with its node.
    pub fn max_shortfall(&self, f: &GridFunction) -> (f64, Vec<usize>) {
        let mut worst = (f64::NEG_INFINITY, Vec::new());
        for flat in 0..f.len() {
            let index = f.unravel(flat);
            let gap = f.values()[flat] - self.sum_at(&index);
            if gap > worst.0 {
                worst = (gap, index);
            }
        }
        worst
    }

    /// Errors unless `phi_1 (+) ... (+) phi_K >= F - tol` on every node.
    pub fn check_domination(&self, f: &GridFunction, tol: f64) -> Result<()> {
        let (shortfall, node) = self.max_shortfall(f);
        if shortfall > tol {
            return Err(Error::DualInfeasible { node, shortfall });
        }
        Ok(())
    }

    /// `sum_k E_{mu_k}[phi_k]` for marginals supported on the grid axes.
    pub fn integral(&self, f: &GridFunction, marginals: &[DiscreteDistribution]) -> Result<f64> {
        let aligned = align(f, marginals)?;
        Ok(marginals
            .iter()
            .zip(&aligned)
            .zip(&self.phi)
            .map(|((m, idx), p)| {
                m.probs()
                    .iter()
                    .zip(idx)
                    .map(|(prob, &i)| prob * p[i])
                    .sum::<f64>()
            })
            .sum())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            phi: self
                .phi
                .iter()
                .map(|p| p.iter().map(|v| v * c).collect())
                .collect(),
            normalized: false,
        }
    }
}

/// Primal and dual solutions of one transport LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportCertificate {
    pub primal_value: f64,
    pub dual_value: f64,
    /// Indices refer to `marginals` (zero-probability atoms removed).
    pub coupling: Coupling,
    pub dual: SeparableDual,
    pub gap: f64,
    pub marginals: Vec<DiscreteDistribution>,
}

impl TransportCertificate {
    pub fn verdict(&self, tol: f64) -> Verdict {
        Verdict::judge(self.primal_value, tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Valid,
    Boundary,
    Invalid,
}

impl Verdict {
    /// `Invalid` above `1 + tol`, `Boundary` within `[1 - tol, 1 + tol]`,
    /// `Valid` below.
    pub fn judge(value: f64, tol: f64) -> Self {
        if value > 1.0 + tol {
            Verdict::Invalid
        } else if value >= 1.0 - tol {
            Verdict::Boundary
        } else {
            Verdict::Valid
        }
    }
}

/// Maps each marginal's atoms to positions on the matching grid axis.
fn align(f: &GridFunction, marginals: &[DiscreteDistribution]) -> Result<Vec<Vec<usize>>> {
    if marginals.len() != f.arity() {
        return Err(Error::DimensionMismatch {
            what: "marginals",
            expected: f.arity(),
            found: marginals.len(),
        });
    }
    marginals
        .iter()
        .enumerate()
        .map(|(k, m)| {
            m.atoms()
                .iter()
                .map(|&a| f.axis_index(k, a).ok_or(Error::Alignment { marginal: k, atom: a }))
                .collect()
        })
        .collect()
}

/// Extends a dual known on marginal atoms to whole axes, keeping
/// domination at every grid node. Off-support values are raised, axis by
/// axis, to the least value restoring domination; raising never breaks a
/// constraint fixed earlier.
fn extend_dual(f: &GridFunction, phi: Vec<Vec<Option<f64>>>) -> Vec<Vec<f64>> {
    let k_dim = f.arity();
    let known: Vec<Vec<bool>> = phi
        .iter()
        .map(|p| p.iter().map(Option::is_some).collect())
        .collect();
    let mut values: Vec<Vec<f64>> = phi
        .into_iter()
        .map(|p| {
            let floor = p.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let floor = if floor.is_finite() { floor } else { 0.0 };
            p.into_iter().map(|v| v.unwrap_or(floor)).collect()
        })
        .collect();
    for k in 0..k_dim {
        for flat in 0..f.len() {
            let index = f.unravel(flat);
            if known[k][index[k]] {
                continue;
            }
            let others: f64 = (0..k_dim)
                .filter(|&j| j != k)
                .map(|j| values[j][index[j]])
                .sum();
            let need = f.values()[flat] - others;
            let slot = &mut values[k][index[k]];
            if need > *slot {
                *slot = need;
            }
        }
    }
    values
}

/// Worst-case `E[F(E_1, ..., E_K)]` over all couplings of the marginals,
/// with an optimal coupling and separable dual.
pub fn worst_case_expectation(
    f: &GridFunction,
    marginals: &[DiscreteDistribution],
) -> Result<TransportCertificate> {
    worst_case_expectation_with(f, marginals, &SimplexOptions::default())
}

pub fn worst_case_expectation_with(
    f: &GridFunction,
    marginals: &[DiscreteDistribution],
    options: &SimplexOptions,
) -> Result<TransportCertificate> {
    let marginals: Vec<DiscreteDistribution> = marginals.iter().map(|m| m.pruned()).collect();
    let aligned = align(f, &marginals)?;
    let k_dim = f.arity();
    let joint: usize = marginals.iter().map(|m| m.len()).product();
    if joint > MAX_JOINT_ATOMS {
        return Err(Error::TooLarge {
            size: joint,
            limit: MAX_JOINT_ATOMS,
        });
    }

    // Columns: every tuple of atom indices, last marginal fastest.
    let mut tuples = Vec::with_capacity(joint);
    let mut objective = Vec::with_capacity(joint);
    let mut tuple = vec![0usize; k_dim];
    let mut grid_index = vec![0usize; k_dim];
    for flat in 0..joint {
        let mut rest = flat;
        for k in (0..k_dim).rev() {
            tuple[k] = rest % marginals[k].len();
            rest /= marginals[k].len();
            grid_index[k] = aligned[k][tuple[k]];
        }
        tuples.push(tuple.clone());
        objective.push(f.value_at(&grid_index));
    }

    let mut lp = LinearProgram::new(Sense::Maximize, objective);
    let mut row_of: Vec<Vec<usize>> = Vec::with_capacity(k_dim);
    let mut rows: Vec<Vec<Vec<(usize, f64)>>> = marginals
        .iter()
        .map(|m| vec![Vec::new(); m.len()])
        .collect();
    for (j, t) in tuples.iter().enumerate() {
        for (k, &i) in t.iter().enumerate() {
            rows[k][i].push((j, 1.0));
        }
    }
    for (k, m) in marginals.iter().enumerate() {
        let mut ids = Vec::with_capacity(m.len());
        for (i, &p) in m.probs().iter().enumerate() {
            ids.push(lp.add_constraint(&rows[k][i], Relation::Eq, p));
        }
        row_of.push(ids);
    }
    let solution = lp.solve(options)?;

    let mut support = Vec::new();
    let mut mass = Vec::new();
    for (t, &x) in tuples.iter().zip(&solution.primal) {
        if x > 0.0 {
            support.push(t.clone());
            mass.push(x);
        }
    }
    let coupling = Coupling { support, mass };
    coupling.validate(&marginals)?;

    let mut partial: Vec<Vec<Option<f64>>> = (0..k_dim).map(|k| vec![None; f.axis(k).len()]).collect();
    for k in 0..k_dim {
        for (i, &row) in row_of[k].iter().enumerate() {
            partial[k][aligned[k][i]] = Some(solution.dual[row]);
        }
    }
    let dual = SeparableDual {
        phi: extend_dual(f, partial),
        normalized: false,
    };
    dual.check_domination(f, tolerances::DUAL_DOMINATION)?;

    let primal_value = coupling.expectation(&marginals, |x| {
        f.lookup(x).expect("coupling atoms are aligned with the grid")
    });
    let dual_value = dual.integral(f, &marginals)?;
    let gap = dual_value - primal_value;
    if gap < -tolerances::WEAK_DUALITY {
        return Err(Error::Consistency(format!(
            "weak duality violated: dual {dual_value} < primal {primal_value}"
        )));
    }
    if gap > tolerances::LP_VERDICT {
        return Err(LpError::Numerical(format!(
            "duality gap {gap} exceeds {}",
            tolerances::LP_VERDICT
        ))
        .into());
    }
    Ok(TransportCertificate {
        primal_value,
        dual_value,
        coupling,
        dual,
        gap,
        marginals,
    })
}

/// The two-point counterexample law: `(E_1, ..., E_K) = e` with
/// probability `1 / max(e)`, and `0` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAdversary {
    pub marginals: Vec<DiscreteDistribution>,
    pub coupling: Coupling,
    pub expectation: f64,
}

pub fn binary_adversary(f: &GridFunction, e: &EValueVector) -> Result<BinaryAdversary> {
    if e.len() != f.arity() {
        return Err(Error::DimensionMismatch {
            what: "e-value vector",
            expected: f.arity(),
            found: e.len(),
        });
    }
    let top = e.max();
    if top <= 1.0 {
        return Err(Error::Precondition(format!(
            "binary adversary needs max(e) > 1, got {top}"
        )));
    }
    let f_e = f.lookup(e.as_slice()).ok_or_else(|| {
        let (k, &a) = e
            .as_slice()
            .iter()
            .enumerate()
            .find(|(k, &x)| f.axis_index(*k, x).is_none())
            .expect("some coordinate is off-grid");
        Error::Alignment { marginal: k, atom: a }
    })?;
    let f_zero = f.value_at(&vec![0; f.arity()]);
    let p = 1.0 / top;

    let mut marginals = Vec::with_capacity(e.len());
    let mut high = Vec::with_capacity(e.len());
    let mut low = Vec::with_capacity(e.len());
    for &x in e.as_slice() {
        if x > 0.0 {
            marginals.push(DiscreteDistribution::new(vec![0.0, x], vec![1.0 - p, p])?);
            low.push(0);
            high.push(1);
        } else {
            marginals.push(DiscreteDistribution::point_mass(0.0)?);
            low.push(0);
            high.push(0);
        }
    }
    let coupling = Coupling {
        support: vec![high, low],
        mass: vec![p, 1.0 - p],
    };
    coupling.validate(&marginals)?;
    Ok(BinaryAdversary {
        marginals,
        coupling,
        expectation: f_e * p + f_zero * (1.0 - p),
    })
}

/// Shifts a separable dual so every component has the same minimum
/// `sum_m c_m / K` (with `c_k = min phi_k`). The sum at every node and
/// every marginal-sum integral are unchanged.
pub fn shift_dual(phi: &SeparableDual) -> SeparableDual {
    let mins: Vec<f64> = phi
        .phi
        .iter()
        .map(|p| p.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let share = mins.iter().sum::<f64>() / phi.arity() as f64;
    SeparableDual {
        phi: phi
            .phi
            .iter()
            .zip(&mins)
            .map(|(p, c)| p.iter().map(|v| v - c + share).collect())
            .collect(),
        normalized: false,
    }
}

/// Shift then truncate to `[0, 1]`, for `F` already scaled into `[0, 1]`.
///
/// The result still dominates `F`, and its marginal-sum integral never
/// exceeds that of `phi`.
pub fn normalize_dual(phi: &SeparableDual, f: &GridFunction) -> Result<SeparableDual> {
    if phi.arity() != f.arity() {
        return Err(Error::DimensionMismatch {
            what: "dual components",
            expected: f.arity(),
            found: phi.arity(),
        });
    }
    if f.max_value() > 1.0 + tolerances::ARITHMETIC {
        return Err(Error::Precondition(format!(
            "F must be scaled into [0, 1] first (max value {})",
            f.max_value()
        )));
    }
    phi.check_domination(f, tolerances::DUAL_DOMINATION)?;
    let shifted = shift_dual(phi);
    Ok(SeparableDual {
        phi: shifted
            .phi
            .into_iter()
            .map(|p| p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
            .collect(),
        normalized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grid_sample, AxisSpec};
    use crate::weights::Weights;

    fn axes(points: &[f64], k: usize) -> Vec<AxisSpec> {
        vec![AxisSpec::Points(points.to_vec()); k]
    }

    fn half_half(x: f64, y: f64) -> DiscreteDistribution {
        DiscreteDistribution::new(vec![x, y], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn max_with_antithetic_marginals() {
        let f = grid_sample(|e| e[0].max(e[1]), 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let ms = vec![half_half(0.0, 2.0), half_half(0.0, 2.0)];
        let cert = worst_case_expectation(&f, &ms).unwrap();
        assert!((cert.primal_value - 2.0).abs() < 1e-9);
        assert!(cert.gap.abs() < 1e-9);
        assert_eq!(cert.verdict(1e-6), Verdict::Invalid);
        // Antithetic: mass 1/2 on (0, 2) and on (2, 0).
        let mut support: Vec<(Vec<usize>, f64)> = cert
            .coupling
            .support
            .iter()
            .cloned()
            .zip(cert.coupling.mass.iter().copied())
            .collect();
        support.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(support.len(), 2);
        assert_eq!(support[0].0, vec![0, 1]);
        assert_eq!(support[1].0, vec![1, 0]);
    }

    #[test]
    fn weighted_average_is_dependence_free() {
        let lambda = Weights::new(vec![0.5, 0.3, 0.2]).unwrap();
        let f = grid_sample(|e| lambda.apply(e), 2.0, &axes(&[0.0, 0.5, 1.0, 2.0], 2)).unwrap();
        let ms = vec![
            half_half(0.0, 2.0),
            DiscreteDistribution::new(vec![0.0, 0.5, 1.0], vec![0.25, 0.5, 0.25]).unwrap(),
        ];
        let cert = worst_case_expectation(&f, &ms).unwrap();
        assert!((cert.primal_value - 0.85).abs() < 1e-9);
        assert_eq!(cert.verdict(1e-6), Verdict::Valid);
    }

    #[test]
    fn single_point_mass() {
        let f = grid_sample(|e| e[0], 2.0, &axes(&[0.0, 1.0, 2.0], 1)).unwrap();
        let cert = worst_case_expectation(&f, &[DiscreteDistribution::point_mass(1.0).unwrap()])
            .unwrap();
        assert!((cert.primal_value - 1.0).abs() < 1e-12);
        assert_eq!(cert.coupling.support, vec![vec![0]]);
        assert_eq!(cert.verdict(1e-6), Verdict::Boundary);
    }

    #[test]
    fn off_grid_atom_is_alignment_error() {
        let f = grid_sample(|e| e[0], 2.0, &axes(&[0.0, 1.0, 2.0], 1)).unwrap();
        let m = DiscreteDistribution::new(vec![0.5, 1.5], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            worst_case_expectation(&f, &[m]),
            Err(Error::Alignment { marginal: 0, .. })
        ));
    }

    #[test]
    fn zero_probability_atoms_are_dropped() {
        let f = grid_sample(|e| e[0].max(e[1]), 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let m = DiscreteDistribution::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.0, 0.5]).unwrap();
        let cert = worst_case_expectation(&f, &[m.clone(), m]).unwrap();
        assert_eq!(cert.marginals[0].atoms(), &[0.0, 2.0]);
        assert!((cert.primal_value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn dual_extends_to_the_whole_grid() {
        let f = grid_sample(|e| e[0].max(e[1]), 3.0, &axes(&[0.0, 1.0, 2.0, 3.0], 2)).unwrap();
        let ms = vec![half_half(0.0, 2.0), DiscreteDistribution::point_mass(1.0).unwrap()];
        let cert = worst_case_expectation(&f, &ms).unwrap();
        cert.dual.check_domination(&f, 1e-9).unwrap();
        assert_eq!(cert.dual.phi[0].len(), 4);
    }

    #[test]
    fn binary_adversary_examples() {
        let prod = grid_sample(|e| e[0] * e[1], 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let adv = binary_adversary(&prod, &EValueVector::new(vec![2.0, 2.0]).unwrap()).unwrap();
        assert_eq!(adv.expectation, 2.0);
        for m in &adv.marginals {
            assert_eq!(m.atoms(), &[0.0, 2.0]);
            assert_eq!(m.probs(), &[0.5, 0.5]);
        }

        let max = grid_sample(|e| e[0].max(e[1]), 3.0, &axes(&[0.0, 1.0, 2.0, 3.0], 2)).unwrap();
        let adv = binary_adversary(&max, &EValueVector::new(vec![3.0, 2.0]).unwrap()).unwrap();
        assert!((adv.expectation - 1.0).abs() < 1e-15);
        for m in &adv.marginals {
            assert!(m.mean() <= 1.0 + 1e-12);
        }

        let lambda = Weights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mf = grid_sample(|e| lambda.apply(e), 3.0, &axes(&[0.0, 1.0, 2.0, 3.0], 2)).unwrap();
        let e = EValueVector::new(vec![3.0, 0.0]).unwrap();
        let adv = binary_adversary(&mf, &e).unwrap();
        let closed = lambda.apply(e.as_slice()) / 3.0 + 0.5 * (1.0 - 1.0 / 3.0);
        assert!((adv.expectation - closed).abs() < 1e-15);
        assert!(adv.expectation <= 1.0);
        adv.coupling.validate(&adv.marginals).unwrap();
    }

    #[test]
    fn binary_adversary_needs_large_entry() {
        let max = grid_sample(|e| e[0].max(e[1]), 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let e = EValueVector::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(binary_adversary(&max, &e), Err(Error::Precondition(_))));
    }

    #[test]
    fn shift_example_cancels_constants() {
        let f = grid_sample(|e| e[0].min(1.0) * 0.5, 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let axis = f.axis(0).to_vec();
        let phi = SeparableDual::new(
            vec![axis.iter().map(|x| x - 5.0).collect(), vec![5.0; 3]],
            &f,
        )
        .unwrap();
        let shifted = shift_dual(&phi);
        assert_eq!(shifted.phi[0], axis);
        assert_eq!(shifted.phi[1], vec![0.0; 3]);
        let ms = vec![half_half(0.0, 2.0), DiscreteDistribution::point_mass(1.0).unwrap()];
        let before = phi.integral(&f, &ms).unwrap();
        let after = shifted.integral(&f, &ms).unwrap();
        assert!((before - after).abs() < 1e-12);

        let normalized = normalize_dual(&phi, &f).unwrap();
        assert!(normalized.normalized);
        assert_eq!(normalized.phi[0], vec![0.0, 1.0, 1.0]);
        normalized.check_domination(&f, 1e-12).unwrap();
        assert!(normalized.integral(&f, &ms).unwrap() <= before + 1e-12);
    }

    #[test]
    fn normalize_fixed_point_and_zero() {
        let f = grid_sample(|_| 0.0, 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let zero = SeparableDual::new(vec![vec![0.0; 3]; 2], &f).unwrap();
        assert_eq!(normalize_dual(&zero, &f).unwrap().phi, zero.phi);

        let g = grid_sample(|e| 0.25 * (e[0] + e[1]), 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let inside = SeparableDual::new(
            vec![vec![0.0, 0.25, 0.5], vec![0.0, 0.25, 0.5]],
            &g,
        )
        .unwrap();
        assert_eq!(normalize_dual(&inside, &g).unwrap().phi, inside.phi);
    }

    #[test]
    fn normalize_rejects_non_dominating_dual() {
        let f = grid_sample(|e| 0.25 * (e[0] + e[1]), 2.0, &axes(&[0.0, 1.0, 2.0], 2)).unwrap();
        let phi = SeparableDual::new(vec![vec![0.0; 3]; 2], &f).unwrap();
        assert!(matches!(
            normalize_dual(&phi, &f),
            Err(Error::DualInfeasible { .. })
        ));
    }
}
