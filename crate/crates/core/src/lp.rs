//! Dense revised primal simplex with dual extraction.
//!
//! Problems are small (a few hundred rows, up to ~10^4 columns) and must
//! come with certifiable duals, so the solver keeps an explicit basis
//! inverse, refactors it periodically, and reads the duals
//! `y = c_B B^{-1}` off the optimal basis. Pricing is Dantzig's rule until a
//! run of degenerate pivots is seen, after which Bland's rule takes over to
//! rule out cycling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("LP is infeasible (phase-one residual {residual})")]
    Infeasible { residual: f64 },
    #[error("LP is unbounded")]
    Unbounded,
    #[error(
        "simplex did not converge within {iterations} iterations \
         (best primal bound {primal_bound:?})"
    )]
    IterationLimit {
        iterations: usize,
        primal_bound: Option<f64>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Reduced costs below `-optimality_tol` are eligible to enter.
    pub optimality_tol: f64,
    /// Phase-one residual above which the problem is declared infeasible.
    pub feasibility_tol: f64,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: f64,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            optimality_tol: 1e-9,
            feasibility_tol: 1e-9,
            pivot_tol: 1e-9,
            refactor_every: 50,
            degenerate_limit: 50,
        }
    }
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// A linear program over nonnegative variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One multiplier per constraint, signed so that `sum_i rhs_i * dual_i`
    /// equals the optimal objective. For a maximization, the dual
    /// constraints read `A^T y >= c`; for a minimization, `A^T y <= c`.
    pub dual: Vec<f64>,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        Self {
            sense,
            objective,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    /// Adds `sum coeffs <relation> rhs`; returns the constraint index.
    pub fn add_constraint(&mut self, coeffs: &[(usize, f64)], relation: Relation, rhs: f64) -> usize {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.objective.len()));
        self.rows.push(Row {
            coeffs: coeffs.iter().copied().filter(|&(_, a)| a != 0.0).collect(),
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn solve(&self, options: &SimplexOptions) -> Result<LpSolution, LpError> {
        Tableau::build(self).run(options)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    n_structural: usize,
    /// Sparse columns over the sign-normalized rows.
    columns: Vec<Vec<(usize, f64)>>,
    kinds: Vec<ColumnKind>,
    /// Minimization costs for phase two.
    cost: Vec<f64>,
    rhs: Vec<f64>,
    flipped: Vec<bool>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    sense: Sense,
    iterations: usize,
}

enum Phase {
    One,
    Two,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.objective.len();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut kinds = vec![ColumnKind::Structural; n];
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
        let mut rhs = Vec::with_capacity(m);
        let mut flipped = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);

        for (i, row) in lp.rows.iter().enumerate() {
            let flip = row.rhs < 0.0;
            let s = if flip { -1.0 } else { 1.0 };
            for &(j, a) in &row.coeffs {
                columns[j].push((i, s * a));
            }
            rhs.push(s * row.rhs);
            flipped.push(flip);
            let relation = match (row.relation, flip) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            };
            match relation {
                Relation::Le => {
                    columns.push(vec![(i, 1.0)]);
                    kinds.push(ColumnKind::Slack);
                    cost.push(0.0);
                    basis.push(columns.len() - 1);
                }
                Relation::Ge => {
                    columns.push(vec![(i, -1.0)]);
                    kinds.push(ColumnKind::Slack);
                    cost.push(0.0);
                    columns.push(vec![(i, 1.0)]);
                    kinds.push(ColumnKind::Artificial);
                    cost.push(0.0);
                    basis.push(columns.len() - 1);
                }
                Relation::Eq => {
                    columns.push(vec![(i, 1.0)]);
                    kinds.push(ColumnKind::Artificial);
                    cost.push(0.0);
                    basis.push(columns.len() - 1);
                }
            }
        }

        let mut in_basis = vec![false; columns.len()];
        for &b in &basis {
            in_basis[b] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let xb = rhs.clone();
        Self {
            m,
            n_structural: n,
            columns,
            kinds,
            cost,
            rhs,
            flipped,
            basis,
            in_basis,
            binv,
            xb,
            sense: lp.sense,
            iterations: 0,
        }
    }

    fn phase_cost(&self, phase: &Phase, j: usize) -> f64 {
        match phase {
            Phase::One => {
                if self.kinds[j] == ColumnKind::Artificial {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => self.cost[j],
        }
    }

    fn duals(&self, phase: &Phase) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &b) in self.basis.iter().enumerate() {
            let c = self.phase_cost(phase, b);
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yr, br) in y.iter_mut().zip(row) {
                    *yr += c * br;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, phase: &Phase, y: &[f64], j: usize) -> f64 {
        self.phase_cost(phase, j) - self.columns[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>()
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(r, a) in &self.columns[j] {
            for (i, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[i * m + r] * a;
            }
        }
        alpha
    }

    fn pivot(&mut self, p: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[p];
        let step = self.xb[p] / piv;
        for i in 0..m {
            if i != p {
                self.xb[i] -= step * alpha[i];
            }
        }
        self.xb[p] = step;
        for c in 0..m {
            self.binv[p * m + c] /= piv;
        }
        for i in 0..m {
            if i == p || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for c in 0..m {
                let v = self.binv[p * m + c];
                if v != 0.0 {
                    self.binv[i * m + c] -= f * v;
                }
            }
        }
        self.in_basis[self.basis[p]] = false;
        self.basis[p] = q;
        self.in_basis[q] = true;
    }

    /// Rebuilds `B^{-1}` and `x_B` from scratch by Gauss-Jordan elimination.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (i, &b) in self.basis.iter().enumerate() {
            for &(r, a) in &self.columns[b] {
                aug[r * w + i] = a;
            }
        }
        for r in 0..m {
            aug[r * w + m + r] = 1.0;
        }
        for col in 0..m {
            let (best, mag) = (col..m)
                .map(|r| (r, aug[r * w + col].abs()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if mag < 1e-12 {
                return Err(LpError::Numerical("singular basis".into()));
            }
            if best != col {
                for c in 0..w {
                    aug.swap(best * w + c, col * w + c);
                }
            }
            let piv = aug[col * w + col];
            for c in 0..w {
                aug[col * w + c] /= piv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = aug[r * w + col];
                if f != 0.0 {
                    for c in 0..w {
                        aug[r * w + c] -= f * aug[col * w + c];
                    }
                }
            }
        }
        for i in 0..m {
            for c in 0..m {
                self.binv[i * m + c] = aug[i * w + m + c];
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|r| self.binv[i * m + r] * self.rhs[r]).sum();
            self.xb[i] = if v.abs() < 1e-13 { 0.0 } else { v };
        }
        Ok(())
    }

    fn objective(&self, phase: &Phase) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .map(|(&b, &x)| self.phase_cost(phase, b) * x)
            .sum()
    }

    fn iterate(&mut self, phase: Phase, opts: &SimplexOptions) -> Result<Phase, LpError> {
        let mut degenerate_run = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit {
                    iterations: self.iterations,
                    primal_bound: match phase {
                        Phase::One => None,
                        Phase::Two => Some(self.signed_objective(self.objective(&phase))),
                    },
                });
            }
            let bland = degenerate_run >= opts.degenerate_limit;
            let y = self.duals(&phase);
            let mut entering = None;
            let mut best = -opts.optimality_tol;
            for j in 0..self.columns.len() {
                if self.in_basis[j] || self.kinds[j] == ColumnKind::Artificial {
                    continue;
                }
                let d = self.reduced_cost(&phase, &y, j);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(phase);
            };
            let alpha = self.ftran(q);
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                if alpha[i] <= opts.pivot_tol {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / alpha[i];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        if ratio < best_ratio - 1e-12 {
                            true
                        } else if ratio <= best_ratio + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[l]
                            } else {
                                alpha[i] > alpha[l]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    best_ratio = best_ratio.min(ratio);
                }
            }
            let Some(p) = leave else {
                return Err(LpError::Unbounded);
            };
            if best_ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.xb[p] = self.xb[p].max(0.0);
            self.pivot(p, q, &alpha);
            self.iterations += 1;
            since_refactor += 1;
            if since_refactor >= opts.refactor_every {
                self.refactor()?;
                since_refactor = 0;
            }
        }
    }

    fn signed_objective(&self, min_value: f64) -> f64 {
        match self.sense {
            Sense::Minimize => min_value,
            Sense::Maximize => -min_value,
        }
    }

    /// Pivots zero-level artificials out of the basis where a structural or
    /// slack column can replace them. Artificials left behind sit on
    /// redundant rows.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for p in 0..m {
            if self.kinds[self.basis[p]] != ColumnKind::Artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.columns.len() {
                if self.in_basis[j] || self.kinds[j] == ColumnKind::Artificial {
                    continue;
                }
                let v: f64 = self.columns[j]
                    .iter()
                    .map(|&(r, a)| self.binv[p * m + r] * a)
                    .sum();
                if v.abs() > 1e-7 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((q, _)) = best {
                self.xb[p] = 0.0;
                let alpha = self.ftran(q);
                self.pivot(p, q, &alpha);
            }
        }
    }

    fn run(mut self, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
        let needs_phase_one = self
            .basis
            .iter()
            .any(|&b| self.kinds[b] == ColumnKind::Artificial);
        if needs_phase_one {
            let phase = self.iterate(Phase::One, opts)?;
            self.refactor()?;
            let residual = self.objective(&phase);
            let scale = self.rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            if residual > opts.feasibility_tol * scale {
                return Err(LpError::Infeasible { residual });
            }
            self.drive_out_artificials();
            self.refactor()?;
        }
        let phase = self.iterate(Phase::Two, opts)?;
        self.refactor()?;

        let mut x = vec![0.0; self.columns.len()];
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.xb[i];
        }
        // Feasibility of the final basis, after refactoring.
        if let Some(bad) = self.xb.iter().find(|&&v| v < -1e-7) {
            return Err(LpError::Numerical(format!(
                "final basis infeasible: basic value {bad}"
            )));
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if self.kinds[b] == ColumnKind::Artificial && self.xb[i].abs() > 1e-7 {
                return Err(LpError::Numerical(
                    "artificial variable left at a nonzero level".into(),
                ));
            }
        }
        let y = self.duals(&phase);
        let primal: Vec<f64> = x[..self.n_structural].iter().map(|v| v.max(0.0)).collect();
        let min_obj: f64 = (0..self.n_structural).map(|j| self.cost[j] * primal[j]).sum();
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let dual = y
            .iter()
            .zip(&self.flipped)
            .map(|(&v, &f)| sign * if f { -v } else { v })
            .collect();
        Ok(LpSolution {
            objective: sign * min_obj,
            primal,
            dual,
            iterations: self.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(lp: &LinearProgram) -> LpSolution {
        lp.solve(&SimplexOptions::default()).unwrap()
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> 36 at (2, 6)
        let mut lp = LinearProgram::new(Sense::Maximize, vec![3.0, 5.0]);
        lp.add_constraint(&[(0, 1.0)], Relation::Le, 4.0);
        lp.add_constraint(&[(1, 2.0)], Relation::Le, 12.0);
        lp.add_constraint(&[(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let s = solve(&lp);
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.primal[0] - 2.0).abs() < 1e-9 && (s.primal[1] - 6.0).abs() < 1e-9);
        // Known optimal duals (0, 3/2, 1).
        assert!((s.dual[0]).abs() < 1e-9);
        assert!((s.dual[1] - 1.5).abs() < 1e-9);
        assert!((s.dual[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn minimization_with_ge_and_eq() {
        // min x + 2y + 3z  s.t. x + y + z = 1, y + z >= 0.5 -> 1.5 at (0.5, 0.5, 0)
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0, 2.0, 3.0]);
        lp.add_constraint(&[(0, 1.0), (1, 1.0), (2, 1.0)], Relation::Eq, 1.0);
        lp.add_constraint(&[(1, 1.0), (2, 1.0)], Relation::Ge, 0.5);
        let s = solve(&lp);
        assert!((s.objective - 1.5).abs() < 1e-9);
        let dual_obj = s.dual[0] * 1.0 + s.dual[1] * 0.5;
        assert!((dual_obj - s.objective).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // max -x s.t. -x <= -2  (x >= 2) -> -2
        let mut lp = LinearProgram::new(Sense::Maximize, vec![-1.0]);
        lp.add_constraint(&[(0, -1.0)], Relation::Le, -2.0);
        let s = solve(&lp);
        assert!((s.objective + 2.0).abs() < 1e-9);
        assert!((s.dual[0] * -2.0 - s.objective).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        // 2x2 transportation problem: row and column sums, one redundant.
        let mut lp = LinearProgram::new(Sense::Maximize, vec![0.0, 2.0, 2.0, 2.0]);
        lp.add_constraint(&[(0, 1.0), (1, 1.0)], Relation::Eq, 0.5);
        lp.add_constraint(&[(2, 1.0), (3, 1.0)], Relation::Eq, 0.5);
        lp.add_constraint(&[(0, 1.0), (2, 1.0)], Relation::Eq, 0.5);
        lp.add_constraint(&[(1, 1.0), (3, 1.0)], Relation::Eq, 0.5);
        let s = solve(&lp);
        assert!((s.objective - 2.0).abs() < 1e-9);
        let dual_obj: f64 = s.dual.iter().map(|y| 0.5 * y).sum();
        assert!((dual_obj - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0]);
        lp.add_constraint(&[(0, 1.0)], Relation::Le, 1.0);
        lp.add_constraint(&[(0, 1.0)], Relation::Ge, 2.0);
        assert!(matches!(
            lp.solve(&SimplexOptions::default()),
            Err(LpError::Infeasible { .. })
        ));

        let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]);
        lp.add_constraint(&[(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert!(matches!(
            lp.solve(&SimplexOptions::default()),
            Err(LpError::Unbounded)
        ));
    }

    #[test]
    fn iteration_limit_is_reported() {
        let mut lp = LinearProgram::new(Sense::Maximize, vec![3.0, 5.0]);
        lp.add_constraint(&[(0, 1.0)], Relation::Le, 4.0);
        lp.add_constraint(&[(1, 2.0)], Relation::Le, 12.0);
        lp.add_constraint(&[(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let opts = SimplexOptions {
            max_iterations: 1,
            ..SimplexOptions::default()
        };
        assert!(matches!(
            lp.solve(&opts),
            Err(LpError::IterationLimit { iterations: 1, .. })
        ));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling example under Dantzig pricing.
        let mut lp = LinearProgram::new(Sense::Maximize, vec![0.75, -150.0, 0.02, -6.0]);
        lp.add_constraint(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        lp.add_constraint(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        lp.add_constraint(&[(2, 1.0)], Relation::Le, 1.0);
        let opts = SimplexOptions {
            degenerate_limit: 3,
            ..SimplexOptions::default()
        };
        let s = lp.solve(&opts).unwrap();
        assert!((s.objective - 0.05).abs() < 1e-9);
    }
}
