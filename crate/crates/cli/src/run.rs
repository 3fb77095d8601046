//! The `run` pipelines, one per scenario kind.

use emerge_core::domination::{dominate_with, invalidity_certificate, DominateOptions};
use emerge_core::error::Error as CoreError;
use emerge_core::grid::GridFunction;
use emerge_core::merge::{structural_upper_check, EValueVector};
use emerge_core::oracle::{enumerate_couplings_value, SmallInstance};
use emerge_core::subclasses::montecarlo::DEFAULT_REPS;
use emerge_core::subclasses::{
    full_support_admissibility_check, identical_merge, incomparability_witnesses, simulate, Rule,
};
use emerge_core::tolerances;
use emerge_core::transport::{normalize_dual, worst_case_expectation, TransportCertificate, Verdict};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::report::{sha256_hex, Report, Table, Tolerances, TOOL, VERSION};
use crate::scenario::Scenario;

/// Oracle and LP must agree this closely when the oracle is exhaustive.
pub const ORACLE_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 0;

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub reps: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub table: Option<Table>,
    /// Some verdict landed within tolerance of 1.
    pub boundary: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.boundary {
            2
        } else {
            0
        }
    }
}

pub fn parse_scenario(bytes: &[u8]) -> Result<Scenario, CliError> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn run_bytes(bytes: &[u8], opts: &RunOptions) -> Result<Outcome, CliError> {
    let scenario = parse_scenario(bytes)?;
    run_scenario(&scenario, &sha256_hex(bytes), opts)
}

fn verdict_tol(opts: &RunOptions, scenario_tol: Option<f64>) -> Result<f64, CliError> {
    let tol = opts.tol.or(scenario_tol).unwrap_or(tolerances::LP_VERDICT);
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::input("tol", format!("{tol} is not finite and >= 0")));
    }
    Ok(tol)
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn run_scenario(scenario: &Scenario, hash: &str, opts: &RunOptions) -> Result<Outcome, CliError> {
    let mut seed = None;
    let mut tol = verdict_tol(opts, None)?;
    let (result, table, boundary) = match scenario {
        Scenario::Merge { rule, points } => merge(rule, points)?,
        Scenario::Validity {
            grid,
            marginals,
            tol: t,
        } => {
            tol = verdict_tol(opts, *t)?;
            let f = grid.build()?;
            let cert = worst_case_expectation(&f, marginals)?;
            validity(&f, &cert, tol)
        }
        Scenario::Dominate {
            grid,
            epsilon,
            symmetrize,
            tol: t,
        } => {
            tol = verdict_tol(opts, *t)?;
            let f = grid.build()?;
            let reference = grid.function().and_then(|s| s.weights());
            dominate_result(&f, *epsilon, *symmetrize, tol, reference)?
        }
        Scenario::Duality { grid, marginals } => {
            let f = grid.build()?;
            let cert = worst_case_expectation(&f, marginals)?;
            duality(&f, &cert)?
        }
        Scenario::Simulate {
            rule,
            sampler,
            reps,
            seed: s,
            bound,
            improvement,
            incomparability,
        } => {
            let s = opts.seed.or(*s).unwrap_or(DEFAULT_SEED);
            seed = Some(s);
            let reps = opts.reps.or(*reps).unwrap_or(DEFAULT_REPS);
            let sim = simulate(rule, sampler, reps, s, *bound)?;
            let mut result = json!({ "simulation": sim });
            if let Some(candidate) = improvement {
                let check = full_support_admissibility_check(rule, sampler, candidate, reps, s)?;
                result["admissibility_check"] = serde_json::to_value(check)?;
            }
            if let Some(spec) = incomparability {
                let Rule::Exchangeable { beta } = rule else {
                    return Err(CliError::input(
                        "incomparability",
                        "only defined for the exchangeable rule",
                    ));
                };
                let w = incomparability_witnesses(*beta, &spec.lambda, &spec.axis)?;
                result["incomparability"] = serde_json::to_value(w)?;
            }
            let mut t = Table::new([
                "reps", "seed", "estimate", "std_error", "bound", "threshold", "verdict",
            ]);
            t.push(vec![
                sim.reps.to_string(),
                s.to_string(),
                num(sim.estimate),
                num(sim.std_error),
                num(sim.bound),
                num(sim.threshold),
                serde_json::to_value(sim.verdict)?.as_str().unwrap_or("").to_owned(),
            ]);
            (result, Some(t), false)
        }
        Scenario::OracleCheck {
            grid,
            marginals,
            resolution,
        } => {
            let f = grid.build()?;
            oracle_check(&f, marginals, *resolution)?
        }
    };
    Ok(Outcome {
        report: Report {
            tool: TOOL,
            version: VERSION,
            kind: scenario.kind().to_owned(),
            scenario_sha256: hash.to_owned(),
            seed,
            tolerances: Tolerances::with_verdict(tol),
            result,
        },
        table,
        boundary,
    })
}

type Pipeline = (Value, Option<Table>, bool);

fn merge(rule: &Rule, points: &[Vec<f64>]) -> Result<Pipeline, CliError> {
    let k = points.first().map_or(0, Vec::len);
    if points.is_empty() {
        return Err(CliError::input("points", "no points to evaluate"));
    }
    let mut header: Vec<String> = (1..=k).map(|i| format!("e{i}")).collect();
    header.push("value".into());
    let identical = matches!(rule, Rule::Identical { .. });
    if identical {
        header.push("inside_subclass".into());
    }
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    for (n, e) in points.iter().enumerate() {
        if e.len() != k {
            return Err(CliError::input(
                format!("points[{n}]"),
                format!("has {} coordinates, expected {k}", e.len()),
            ));
        }
        let value = rule.evaluate(e)?;
        let mut row: Vec<String> = e.iter().map(|&x| num(x)).collect();
        row.push(num(value));
        let mut entry = json!({ "e": e, "value": value });
        if let Rule::Identical { lambda } = rule {
            let inside = identical_merge(*lambda, &EValueVector::new(e.clone())?)?.inside_subclass;
            entry["inside_subclass"] = json!(inside);
            row.push(inside.to_string());
        }
        table.push(row);
        rows.push(entry);
    }
    Ok((json!({ "values": rows }), Some(table), false))
}

fn coupling_table(f: &GridFunction, cert: &TransportCertificate) -> (Table, Vec<Value>) {
    let k = cert.marginals.len();
    let mut header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    header.extend(["mass".into(), "F".into()]);
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    for (tuple, &mass) in cert.coupling.support.iter().zip(&cert.coupling.mass) {
        let point: Vec<f64> = tuple
            .iter()
            .enumerate()
            .map(|(k, &i)| cert.marginals[k].atoms()[i])
            .collect();
        let value = f.lookup(&point).unwrap_or(f64::NAN);
        let mut row: Vec<String> = point.iter().map(|&x| num(x)).collect();
        row.extend([num(mass), num(value)]);
        table.push(row);
        rows.push(json!({ "point": point, "mass": mass, "F": value }));
    }
    (table, rows)
}

fn validity(f: &GridFunction, cert: &TransportCertificate, tol: f64) -> Pipeline {
    let verdict = cert.verdict(tol);
    let (table, coupling) = coupling_table(f, cert);
    let result = json!({
        "primal_value": cert.primal_value,
        "dual_value": cert.dual_value,
        "gap": cert.gap,
        "verdict": verdict,
        "verdict_tol": tol,
        "structural_check": structural_upper_check(f),
        "coupling": coupling,
        "marginals": cert.marginals,
        "dual": cert.dual.phi,
    });
    (result, Some(table), verdict == Verdict::Boundary)
}

pub(crate) fn dominate_result(
    f: &GridFunction,
    epsilon: f64,
    symmetrize: bool,
    tol: f64,
    reference: Option<&emerge_core::weights::Weights>,
) -> Result<Pipeline, CliError> {
    let options = DominateOptions {
        symmetrize,
        verdict_tol: tol,
        ..DominateOptions::default()
    };
    match dominate_with(f, epsilon, &options) {
        Ok(r) => {
            let verdict = Verdict::judge(r.lp_value, tol);
            let mut table = Table::new(["k", "t", "h", "h_min", "h_max", "lambda"]);
            for (k, (m, l)) in r.per_k.iter().zip(r.lambda.input_weights()).enumerate() {
                table.push(vec![
                    (k + 1).to_string(),
                    num(m.t),
                    num(m.h),
                    num(m.h_min),
                    num(m.h_max),
                    num(*l),
                ]);
            }
            table.push(vec![
                "constant".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                num(r.lambda.constant_weight()),
            ]);
            let mut result = json!({
                "status": "dominated",
                "verdict": verdict,
                "verdict_tol": tol,
                "violation_tol": tolerances::DOMINATION_VIOLATION,
                "report": r,
            });
            if let Some(w) = reference {
                result["lambda_error"] = json!(w.linf_distance(&r.lambda));
            }
            Ok((result, Some(table), verdict == Verdict::Boundary))
        }
        Err(e @ CoreError::NotValid { .. }) => {
            let cert = invalidity_certificate(&e).expect("NotValid carries a certificate");
            let (table, coupling) = coupling_table(f, cert);
            let result = json!({
                "status": "not-valid",
                "verdict": Verdict::Invalid,
                "verdict_tol": tol,
                "primal_value": cert.primal_value,
                "coupling": coupling,
                "marginals": cert.marginals,
            });
            Ok((result, Some(table), false))
        }
        Err(e) => Err(e.into()),
    }
}

fn duality(f: &GridFunction, cert: &TransportCertificate) -> Result<Pipeline, CliError> {
    let (shortfall, at) = cert.dual.max_shortfall(f);
    let normalized = if f.max_value() <= 1.0 {
        normalize_dual(&cert.dual, f).ok().map(|d| d.phi)
    } else {
        None
    };
    let mut table = Table::new(["k", "x", "phi"]);
    for (k, phi) in cert.dual.phi.iter().enumerate() {
        for (x, p) in f.axis(k).iter().zip(phi) {
            table.push(vec![(k + 1).to_string(), num(*x), num(*p)]);
        }
    }
    let result = json!({
        "primal_value": cert.primal_value,
        "dual_value": cert.dual_value,
        "gap": cert.gap,
        "weak_duality_holds": cert.dual_value >= cert.primal_value - tolerances::WEAK_DUALITY,
        "dual_max_shortfall": shortfall,
        "dual_shortfall_node": at,
        "dual": cert.dual.phi,
        "normalized_dual": normalized,
        "marginals": cert.marginals,
    });
    Ok((result, Some(table), false))
}

fn oracle_check(
    f: &GridFunction,
    marginals: &[emerge_core::distribution::DiscreteDistribution],
    resolution: usize,
) -> Result<Pipeline, CliError> {
    let inst = SmallInstance::new(f.clone(), marginals.to_vec())?;
    let oracle = enumerate_couplings_value(&inst, resolution)?;
    let cert = worst_case_expectation(f, marginals)?;
    let difference = oracle.value - cert.primal_value;
    let agree = if oracle.exact {
        difference.abs() <= ORACLE_TOL
    } else {
        difference <= ORACLE_TOL
    };
    if !agree {
        return Err(CliError::Solver(format!(
            "LP value {} disagrees with oracle value {}",
            cert.primal_value, oracle.value
        )));
    }
    let mut table = Table::new(["lp_value", "oracle_value", "exact", "difference"]);
    table.push(vec![
        num(cert.primal_value),
        num(oracle.value),
        oracle.exact.to_string(),
        num(difference),
    ]);
    let result = json!({
        "lp_value": cert.primal_value,
        "oracle_value": oracle.value,
        "exact": oracle.exact,
        "difference": difference,
        "tolerance": ORACLE_TOL,
        "agree": agree,
        "oracle_coupling": oracle.coupling,
    });
    Ok((result, Some(table), false))
}
