//! Numerical tolerances shared across the crate.
//!
//! Three tiers keep floating-point noise apart from solver termination
//! error: pure arithmetic identities, coupling/marginal bookkeeping, and
//! quantities read off a linear program.

/// Exact arithmetic identities (weights summing to one, affine merges).
pub const ARITHMETIC: f64 = 1e-12;

/// Coupling mass totals and marginal projections.
pub const COUPLING: f64 = 1e-10;

/// Verdict threshold on LP-derived values: a worst-case expectation
/// within this distance of 1 is reported as a boundary case.
pub const LP_VERDICT: f64 = 1e-6;

/// Optimality and feasibility tolerance on simplex residuals.
pub const LP_RESIDUAL: f64 = 1e-9;

/// Slack allowed when checking that a separable dual dominates `F`.
pub const DUAL_DOMINATION: f64 = 1e-9;

/// Weak duality may be violated by at most this much.
pub const WEAK_DUALITY: f64 = 1e-8;

/// Allowed downward step along a grid axis before a sampled function is
/// rejected as non-increasing.
pub const MONOTONICITY: f64 = 1e-9;

/// Slack on the linear majorant bound and on its feasible slope interval.
pub const MAJORANT: f64 = 1e-9;

/// Largest tolerated value of `F - (1 + eps) M_lambda` over the grid.
pub const DOMINATION_VIOLATION: f64 = 1e-8;
