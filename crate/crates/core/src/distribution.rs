//! Finite laws on `[0, theta]` and couplings between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances;

/// A law with finitely many atoms, listed in strictly increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DiscreteDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        DiscreteDistribution::new(raw.atoms, raw.probs)
    }
}

impl From<DiscreteDistribution> for RawDistribution {
    fn from(d: DiscreteDistribution) -> Self {
        RawDistribution {
            atoms: d.atoms,
            probs: d.probs,
        }
    }
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atoms", "distribution needs at least one atom"));
        }
        if atoms.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                what: "probs",
                expected: atoms.len(),
                found: probs.len(),
            });
        }
        if let Some(a) = atoms.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::invalid("atoms", format!("{a} is not finite and >= 0")));
        }
        if let Some(w) = atoms.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(
                "atoms",
                format!("not strictly increasing at {} -> {}", w[0], w[1]),
            ));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid("probs", format!("{p} is not finite and >= 0")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tolerances::ARITHMETIC {
            return Err(Error::invalid("probs", format!("sum to {total}, not 1")));
        }
        Ok(Self { atoms, probs })
    }

    pub fn point_mass(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    /// Law on `{low, high}` with mean exactly 1, for `low < 1 < high`.
    pub fn mean_one_pair(low: f64, high: f64) -> Result<Self> {
        if !(low < 1.0 && 1.0 < high) {
            return Err(Error::invalid(
                "pair",
                format!("need low < 1 < high, got ({low}, {high})"),
            ));
        }
        let p_high = (1.0 - low) / (high - low);
        Self::new(vec![low, high], vec![1.0 - p_high, p_high])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(&x, &p)| p * f(x))
            .sum()
    }

    /// Mean at most 1 (up to 1e-12): the law of an e-variable.
    pub fn is_e_law(&self) -> bool {
        self.mean() <= 1.0 + tolerances::ARITHMETIC
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().expect("nonempty")
    }

    /// Copy without zero-probability atoms.
    pub fn pruned(&self) -> Self {
        let (atoms, probs) = self
            .atoms
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&a, &p)| (a, p))
            .unzip();
        Self { atoms, probs }
    }
}

/// Joint probability mass on a product of atom indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub support: Vec<Vec<usize>>,
    pub mass: Vec<f64>,
}

impl Coupling {
    /// Independent (product) coupling of the marginals.
    pub fn independent(marginals: &[DiscreteDistribution]) -> Self {
        let mut support = vec![Vec::new()];
        let mut mass = vec![1.0];
        for m in marginals {
            let mut next_support = Vec::with_capacity(support.len() * m.len());
            let mut next_mass = Vec::with_capacity(support.len() * m.len());
            for (tuple, w) in support.iter().zip(&mass) {
                for (i, p) in m.probs().iter().enumerate() {
                    let mut t = tuple.clone();
                    t.push(i);
                    next_support.push(t);
                    next_mass.push(w * p);
                }
            }
            support = next_support;
            mass = next_mass;
        }
        Self { support, mass }
    }

    /// North-west-corner coupling: each marginal is swept in the given atom
    /// order and mass is matched greedily. The result is a vertex of the
    /// transportation polytope.
    pub fn north_west_corner(marginals: &[DiscreteDistribution], orders: &[Vec<usize>]) -> Self {
        assert_eq!(marginals.len(), orders.len());
        let k = marginals.len();
        let mut pos = vec![0usize; k];
        let mut left: Vec<f64> = (0..k)
            .map(|j| marginals[j].probs()[orders[j][0]])
            .collect();
        let mut support = Vec::new();
        let mut mass = Vec::new();
        loop {
            let step = left.iter().copied().fold(f64::INFINITY, f64::min);
            if step > 0.0 {
                support.push((0..k).map(|j| orders[j][pos[j]]).collect());
                mass.push(step);
            }
            let mut done = false;
            for j in 0..k {
                left[j] -= step;
                if left[j] <= tolerances::ARITHMETIC {
                    pos[j] += 1;
                    if pos[j] == orders[j].len() {
                        done = true;
                    } else {
                        left[j] = marginals[j].probs()[orders[j][pos[j]]];
                    }
                }
            }
            if done {
                break;
            }
        }
        Self { support, mass }
    }

    /// Convex combination `a * self + (1 - a) * other`.
    pub fn mix(&self, other: &Coupling, a: f64) -> Self {
        let mut support = self.support.clone();
        let mut mass: Vec<f64> = self.mass.iter().map(|m| a * m).collect();
        support.extend(other.support.iter().cloned());
        mass.extend(other.mass.iter().map(|m| (1.0 - a) * m));
        Self { support, mass }
    }

    /// Checks total mass and every univariate projection against the
    /// marginals (1e-10 per atom).
    pub fn validate(&self, marginals: &[DiscreteDistribution]) -> Result<()> {
        if self.support.len() != self.mass.len() {
            return Err(Error::DimensionMismatch {
                what: "coupling mass",
                expected: self.support.len(),
                found: self.mass.len(),
            });
        }
        let mut projections: Vec<Vec<f64>> =
            marginals.iter().map(|m| vec![0.0; m.len()]).collect();
        for (tuple, &w) in self.support.iter().zip(&self.mass) {
            if tuple.len() != marginals.len() {
                return Err(Error::DimensionMismatch {
                    what: "coupling support tuple",
                    expected: marginals.len(),
                    found: tuple.len(),
                });
            }
            if !(w >= 0.0) {
                return Err(Error::invalid("coupling mass", format!("{w} is negative")));
            }
            for (k, &i) in tuple.iter().enumerate() {
                let slot = projections[k].get_mut(i).ok_or_else(|| {
                    Error::invalid("coupling support", format!("atom index {i} out of range"))
                })?;
                *slot += w;
            }
        }
        let total: f64 = self.mass.iter().sum();
        if (total - 1.0).abs() > tolerances::COUPLING {
            return Err(Error::invalid("coupling mass", format!("sums to {total}")));
        }
        for (k, (proj, m)) in projections.iter().zip(marginals).enumerate() {
            for (i, (got, want)) in proj.iter().zip(m.probs()).enumerate() {
                if (got - want).abs() > tolerances::COUPLING {
                    return Err(Error::invalid(
                        format!("coupling marginal {k}"),
                        format!("atom {i} has mass {got}, expected {want}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `E_pi[f]` where `f` receives the atom values of each support point.
    pub fn expectation(
        &self,
        marginals: &[DiscreteDistribution],
        f: impl Fn(&[f64]) -> f64,
    ) -> f64 {
        let mut point = vec![0.0; marginals.len()];
        self.support
            .iter()
            .zip(&self.mass)
            .map(|(tuple, &w)| {
                for (k, &i) in tuple.iter().enumerate() {
                    point[k] = marginals[k].atoms()[i];
                }
                w * f(&point)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_half(x: f64, y: f64) -> DiscreteDistribution {
        DiscreteDistribution::new(vec![x, y], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn rejects_malformed_laws() {
        assert!(DiscreteDistribution::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![-1.0], vec![1.0]).is_err());
    }

    #[test]
    fn mean_one_pair_has_mean_one() {
        let d = DiscreteDistribution::mean_one_pair(0.25, 3.0).unwrap();
        assert!((d.mean() - 1.0).abs() < 1e-15);
        assert!(d.is_e_law());
    }

    #[test]
    fn pruning_drops_null_atoms() {
        let d = DiscreteDistribution::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(d.pruned().atoms(), &[0.0, 2.0]);
    }

    #[test]
    fn independent_and_nw_couplings_are_feasible() {
        let ms = vec![
            half_half(0.0, 2.0),
            DiscreteDistribution::new(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap(),
        ];
        Coupling::independent(&ms).validate(&ms).unwrap();
        let nw = Coupling::north_west_corner(&ms, &[vec![1, 0], vec![2, 0, 1]]);
        nw.validate(&ms).unwrap();
        assert!(nw.support.len() <= 2 + 3 - 1);
    }

    #[test]
    fn antithetic_coupling_of_max() {
        let ms = vec![half_half(0.0, 2.0), half_half(0.0, 2.0)];
        let anti = Coupling::north_west_corner(&ms, &[vec![0, 1], vec![1, 0]]);
        anti.validate(&ms).unwrap();
        let v = anti.expectation(&ms, |e| e[0].max(e[1]));
        assert_eq!(v, 2.0);
    }

    #[test]
    fn validate_catches_wrong_marginal() {
        let ms = vec![half_half(0.0, 2.0), half_half(0.0, 2.0)];
        let bad = Coupling {
            support: vec![vec![0, 0]],
            mass: vec![1.0],
        };
        assert!(bad.validate(&ms).is_err());
    }
}
