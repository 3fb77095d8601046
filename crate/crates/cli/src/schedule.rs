//! `schedule`: `dominate` over an (epsilon, theta) ladder.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use emerge_core::domination::{dominate_with, DominateOptions};
use emerge_core::weights::Weights;

use crate::error::CliError;
use crate::report::{sha256_hex, Report, Table, Tolerances, TOOL, VERSION};
use crate::run::{parse_scenario, Outcome, RunOptions};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub epsilon: f64,
    pub theta: f64,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Weights>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_violation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp_value: Option<f64>,
    /// `l_inf` distance to the fixture's weights, for weighted fixtures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn check_ladder(name: &str, ladder: &[f64]) -> Result<(), CliError> {
    if ladder.is_empty() {
        return Err(CliError::input(name, "ladder is empty"));
    }
    if let Some(x) = ladder.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(CliError::input(name, format!("{x} is not finite and > 0")));
    }
    let up = ladder.windows(2).all(|w| w[0] < w[1]);
    let down = ladder.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(CliError::input(name, "ladder must be strictly monotone"));
    }
    Ok(())
}

/// Runs every cell; a failing cell is recorded, not fatal. `threads`
/// caps the number of cells in flight.
pub fn schedule_bytes(
    bytes: &[u8],
    epsilons: &[f64],
    thetas: &[f64],
    threads: Option<usize>,
    opts: &RunOptions,
) -> Result<Outcome, CliError> {
    check_ladder("epsilons", epsilons)?;
    check_ladder("thetas", thetas)?;
    let scenario = parse_scenario(bytes)?;
    let Scenario::Dominate {
        grid,
        symmetrize,
        tol,
        ..
    } = &scenario
    else {
        return Err(CliError::input("kind", "schedule needs a dominate scenario"));
    };
    let tol = opts
        .tol
        .or(*tol)
        .unwrap_or(emerge_core::tolerances::LP_VERDICT);
    let reference = grid.function().and_then(|f| f.weights()).cloned();
    let options = DominateOptions {
        symmetrize: *symmetrize,
        verdict_tol: tol,
        ..DominateOptions::default()
    };
    let cells: Vec<(f64, f64)> = thetas
        .iter()
        .flat_map(|&t| epsilons.iter().map(move |&e| (e, t)))
        .collect();
    let run_cell = |&(epsilon, theta): &(f64, f64)| {
        let result = grid
            .at_theta(theta)
            .and_then(|f| dominate_with(&f, epsilon, &options).map_err(CliError::from));
        match result {
            Ok(r) => Cell {
                epsilon,
                theta,
                status: "ok",
                lambda_error: reference.as_ref().map(|w| w.linf_distance(&r.lambda)),
                lambda: Some(r.lambda),
                max_violation: Some(r.max_violation),
                lp_value: Some(r.lp_value),
                error: None,
            },
            Err(e) => Cell {
                epsilon,
                theta,
                status: "error",
                lambda: None,
                max_violation: None,
                lp_value: None,
                lambda_error: None,
                error: Some(e.to_string()),
            },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::input("EMERGE_THREADS", e.to_string()))?;
    let results: Vec<Cell> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let k = results
        .iter()
        .find_map(|c| c.lambda.as_ref().map(Weights::arity))
        .unwrap_or(0);
    let mut header: Vec<String> = ["epsilon", "theta", "status"].map(String::from).to_vec();
    header.extend((1..=k).map(|i| format!("lambda{i}")));
    header.extend(
        ["lambda_constant", "max_violation", "lp_value", "lambda_error", "error"].map(String::from),
    );
    let mut table = Table::new(header);
    let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
    for c in &results {
        let mut row = vec![format!("{}", c.epsilon), format!("{}", c.theta), c.status.into()];
        match &c.lambda {
            Some(w) => row.extend(w.entries().iter().map(|x| format!("{x}"))),
            None => row.extend(std::iter::repeat_n(String::new(), k + 1)),
        }
        row.extend([
            opt(c.max_violation),
            opt(c.lp_value),
            opt(c.lambda_error),
            c.error.clone().unwrap_or_default(),
        ]);
        table.push(row);
    }
    Ok(Outcome {
        report: Report {
            tool: TOOL,
            version: VERSION,
            kind: "schedule".into(),
            scenario_sha256: sha256_hex(bytes),
            seed: None,
            tolerances: Tolerances::with_verdict(tol),
            result: json!({ "epsilons": epsilons, "thetas": thetas, "cells": results }),
        },
        table: Some(table),
        boundary: false,
    })
}
