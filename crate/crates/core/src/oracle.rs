//! Brute-force reference values for small instances.
//!
//! Nothing here goes through the simplex solver: couplings are enumerated
//! as transportation-polytope vertices (two marginals) or built by
//! north-west-corner sweeps with local exchange moves (three marginals),
//! and univariate bounds are found by scanning every two-atom law.

use serde::{Deserialize, Serialize};

use crate::distribution::{Coupling, DiscreteDistribution};
use crate::domination::UnivariateFunction;
use crate::error::{Error, Result};
use crate::grid::GridFunction;

pub const MAX_ARITY: usize = 3;
pub const MAX_ATOMS: usize = 4;
pub const MAX_JOINT: usize = 64;

#[derive(Debug, Clone)]
pub struct SmallInstance {
    f: GridFunction,
    marginals: Vec<DiscreteDistribution>,
    /// Grid positions of each (pruned) marginal's atoms.
    aligned: Vec<Vec<usize>>,
}

impl SmallInstance {
    pub fn new(f: GridFunction, marginals: Vec<DiscreteDistribution>) -> Result<Self> {
        if f.arity() > MAX_ARITY {
            return Err(Error::TooLarge {
                size: f.arity(),
                limit: MAX_ARITY,
            });
        }
        if marginals.len() != f.arity() {
            return Err(Error::DimensionMismatch {
                what: "marginals",
                expected: f.arity(),
                found: marginals.len(),
            });
        }
        let marginals: Vec<_> = marginals.iter().map(|m| m.pruned()).collect();
        if let Some(m) = marginals.iter().find(|m| m.len() > MAX_ATOMS) {
            return Err(Error::TooLarge {
                size: m.len(),
                limit: MAX_ATOMS,
            });
        }
        let joint: usize = marginals.iter().map(|m| m.len()).product();
        if joint > MAX_JOINT {
            return Err(Error::TooLarge {
                size: joint,
                limit: MAX_JOINT,
            });
        }
        let aligned = marginals
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.atoms()
                    .iter()
                    .map(|&a| f.axis_index(k, a).ok_or(Error::Alignment { marginal: k, atom: a }))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            f,
            marginals,
            aligned,
        })
    }

    pub fn marginals(&self) -> &[DiscreteDistribution] {
        &self.marginals
    }

    fn value_of(&self, tuple: &[usize]) -> f64 {
        let index: Vec<usize> = tuple
            .iter()
            .enumerate()
            .map(|(k, &i)| self.aligned[k][i])
            .collect();
        self.f.value_at(&index)
    }

    fn objective(&self, c: &Coupling) -> f64 {
        c.support
            .iter()
            .zip(&c.mass)
            .map(|(t, w)| w * self.value_of(t))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub coupling: Coupling,
    /// True when every vertex was enumerated (one or two marginals).
    pub exact: bool,
}

/// Largest `E_pi[F]` found over couplings of the instance's marginals.
///
/// Exact for one or two marginals. For three, the search starts from all
/// north-west-corner vertices and applies pairwise exchange moves with
/// step `1 / resolution` of the smaller mass, so it is a lower bound.
pub fn enumerate_couplings_value(inst: &SmallInstance, resolution: usize) -> Result<OracleValue> {
    if resolution == 0 {
        return Err(Error::invalid("resolution", "must be positive"));
    }
    match inst.marginals.len() {
        1 => {
            let n = inst.marginals[0].len();
            let coupling = Coupling {
                support: (0..n).map(|i| vec![i]).collect(),
                mass: inst.marginals[0].probs().to_vec(),
            };
            Ok(OracleValue {
                value: inst.objective(&coupling),
                coupling,
                exact: true,
            })
        }
        2 => Ok(two_marginal_vertices(inst)),
        _ => Ok(three_marginal_search(inst, resolution)),
    }
}

/// Every subset of `n1 + n2 - 1` cells forming a spanning tree of the
/// bipartite row/column graph is a basis; its unique solution, when
/// nonnegative, is a vertex.
fn two_marginal_vertices(inst: &SmallInstance) -> OracleValue {
    let (a, b) = (&inst.marginals[0], &inst.marginals[1]);
    let (n1, n2) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
    let size = n1 + n2 - 1;
    let mut best: Option<OracleValue> = None;
    for subset in Combinations::new(cells.len(), size) {
        let chosen: Vec<(usize, usize)> = subset.iter().map(|&c| cells[c]).collect();
        if !is_spanning_tree(&chosen, n1, n2) {
            continue;
        }
        let Some(flows) = solve_tree(&chosen, a.probs(), b.probs()) else {
            continue;
        };
        let coupling = Coupling {
            support: chosen.iter().map(|&(i, j)| vec![i, j]).collect(),
            mass: flows,
        };
        let value = inst.objective(&coupling);
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(OracleValue {
                value,
                coupling,
                exact: true,
            });
        }
    }
    best.expect("the north-west corner basis is always a vertex")
}

fn is_spanning_tree(cells: &[(usize, usize)], n1: usize, n2: usize) -> bool {
    let mut parent: Vec<usize> = (0..n1 + n2).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in cells {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, n1 + j));
        if ri == rj {
            return false;
        }
        parent[ri] = rj;
    }
    true
}

/// Peels leaves off the basis tree; `None` if some flow is negative.
fn solve_tree(cells: &[(usize, usize)], rows: &[f64], cols: &[f64]) -> Option<Vec<f64>> {
    let n1 = rows.len();
    let mut left: Vec<f64> = rows.iter().chain(cols).copied().collect();
    let mut flows = vec![f64::NAN; cells.len()];
    let mut open: Vec<bool> = vec![true; cells.len()];
    for _ in 0..cells.len() {
        let mut degree = vec![0usize; left.len()];
        for (c, &(i, j)) in cells.iter().enumerate() {
            if open[c] {
                degree[i] += 1;
                degree[n1 + j] += 1;
            }
        }
        let (c, leaf) = cells
            .iter()
            .enumerate()
            .filter(|(c, _)| open[*c])
            .find_map(|(c, &(i, j))| {
                if degree[i] == 1 {
                    Some((c, i))
                } else if degree[n1 + j] == 1 {
                    Some((c, n1 + j))
                } else {
                    None
                }
            })?;
        let (i, j) = cells[c];
        let other = if leaf == i { n1 + j } else { i };
        let flow = left[leaf];
        if flow < -1e-12 {
            return None;
        }
        flows[c] = flow.max(0.0);
        left[leaf] = 0.0;
        left[other] -= flow;
        open[c] = false;
    }
    Some(flows)
}

struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn three_marginal_search(inst: &SmallInstance, resolution: usize) -> OracleValue {
    let orders: Vec<Vec<Vec<usize>>> = inst.marginals.iter().map(|m| permutations(m.len())).collect();
    let mut best: Option<(f64, Coupling)> = None;
    for o0 in &orders[0] {
        for o1 in &orders[1] {
            for o2 in &orders[2] {
                let c = Coupling::north_west_corner(
                    &inst.marginals,
                    &[o0.clone(), o1.clone(), o2.clone()],
                );
                let v = inst.objective(&c);
                if best.as_ref().is_none_or(|b| v > b.0 + 1e-15) {
                    best = Some((v, c));
                }
            }
        }
    }
    let (_, mut coupling) = best.expect("at least one ordering");

    // Exchange moves: swap coordinate k between two support points,
    // moving mass delta onto the two swapped points.
    let steps: Vec<f64> = (1..=resolution).rev().map(|s| s as f64 / resolution as f64).collect();
    let mut improved = true;
    let mut rounds = 0;
    while improved && rounds < 1000 {
        improved = false;
        rounds += 1;
        let n = coupling.support.len();
        'search: for a in 0..n {
            for b in a + 1..n {
                for k in 0..inst.marginals.len() {
                    let (sa, sb) = (&coupling.support[a], &coupling.support[b]);
                    if sa[k] == sb[k] {
                        continue;
                    }
                    let mut ta = sa.clone();
                    let mut tb = sb.clone();
                    ta[k] = sb[k];
                    tb[k] = sa[k];
                    let gain = inst.value_of(&ta) + inst.value_of(&tb)
                        - inst.value_of(sa)
                        - inst.value_of(sb);
                    if gain <= 1e-15 {
                        continue;
                    }
                    let room = coupling.mass[a].min(coupling.mass[b]);
                    let delta = room * steps[0];
                    coupling.mass[a] -= delta;
                    coupling.mass[b] -= delta;
                    coupling.support.push(ta);
                    coupling.mass.push(delta);
                    coupling.support.push(tb);
                    coupling.mass.push(delta);
                    improved = true;
                    break 'search;
                }
            }
        }
        compact(&mut coupling);
    }
    OracleValue {
        value: inst.objective(&coupling),
        coupling,
        exact: false,
    }
}

/// Merges duplicate support points and drops empty ones.
fn compact(c: &mut Coupling) {
    let mut merged: Vec<(Vec<usize>, f64)> = Vec::new();
    for (t, &w) in c.support.iter().zip(&c.mass) {
        if w <= 1e-15 {
            continue;
        }
        match merged.iter_mut().find(|(s, _)| s == t) {
            Some(entry) => entry.1 += w,
            None => merged.push((t.clone(), w)),
        }
    }
    c.support = merged.iter().map(|(t, _)| t.clone()).collect();
    c.mass = merged.iter().map(|(_, w)| *w).collect();
}

/// `max E[phi(X)]` over every law on at most two grid points in
/// `[0, theta]` with `E[X] <= 1`, scanning each pair's feasible weights
/// at both endpoints (and the midpoint when both atoms are `<= 1`).
pub fn enumerate_binary_mean_laws(phi: &UnivariateFunction, theta: f64) -> f64 {
    let pts: Vec<(f64, f64)> = phi
        .points()
        .iter()
        .zip(phi.values())
        .filter(|(&x, _)| x <= theta)
        .map(|(&x, &v)| (x, v))
        .collect();
    let mut best = f64::NEG_INFINITY;
    for (i, &(x, gx)) in pts.iter().enumerate() {
        for &(y, gy) in &pts[i..] {
            if x > 1.0 {
                continue;
            }
            // Weight p on y; mean x + p (y - x) <= 1.
            let p_max = if y <= 1.0 { 1.0 } else { (1.0 - x) / (y - x) };
            let mut weights = vec![0.0, p_max];
            if y <= 1.0 {
                weights.push(0.5);
            }
            for p in weights {
                best = best.max((1.0 - p) * gx + p * gy);
            }
        }
    }
    best
}
