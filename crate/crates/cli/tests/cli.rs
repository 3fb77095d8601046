use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emerge_cli::error::CliError;
use emerge_cli::{run_bytes, schedule_bytes, RunOptions};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn emerge(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emerge"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run_fixture(name: &str, extra: &[&str]) -> (Option<i32>, Value, String, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture(name);
    let mut args = vec![
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = emerge(&args, &[]);
    let json = std::fs::read(dir.path().join("report.json"))
        .map(|b| serde_json::from_slice(&b).unwrap())
        .unwrap_or(Value::Null);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap_or_default();
    (out.status.code(), json, csv, dir)
}

#[test]
fn validity_of_max_is_invalid() {
    let (code, report, csv, _dir) = run_fixture("validity_max.json", &[]);
    assert_eq!(code, Some(0));
    let r = &report["result"];
    assert!((r["primal_value"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    assert_eq!(r["verdict"], "invalid");
    assert_eq!(report["tolerances"]["lp_verdict"], 1e-6);
    assert_eq!(report["scenario_sha256"].as_str().unwrap().len(), 64);
    assert!(csv.starts_with("x1,x2,mass,F\n"));
}

#[test]
fn tol_flag_reaches_the_report() {
    let (_, report, _, _dir) = run_fixture("validity_max.json", &["--tol", "1e-4"]);
    assert_eq!(report["tolerances"]["lp_verdict"], 1e-4);
    assert_eq!(report["result"]["verdict_tol"], 1e-4);
}

#[test]
fn self_domination_is_a_boundary_case() {
    // M_lambda's worst-case expectation is exactly 1, so exit status 2.
    let (code, report, csv, _dir) = run_fixture("dominate_weighted.json", &[]);
    assert_eq!(code, Some(2));
    let r = &report["result"];
    assert_eq!(r["status"], "dominated");
    assert_eq!(r["verdict"], "boundary");
    assert!(r["report"]["max_violation"].as_f64().unwrap() <= 1e-8);
    let lambda: Vec<f64> = serde_json::from_value(r["report"]["lambda"].clone()).unwrap();
    for (got, want) in lambda.iter().zip([0.5, 0.2, 0.3]) {
        assert!((got - want).abs() <= 0.01);
    }
    assert!(r["lambda_error"].as_f64().unwrap() <= 0.01);
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn dominate_reports_invalid_functions() {
    let scenario = br#"{
        "kind": "dominate",
        "grid": {
            "source": "sampled",
            "function": { "id": "max" },
            "theta": 2.0,
            "axes": [{ "points": [0.0, 1.0, 2.0] }, { "points": [0.0, 1.0, 2.0] }]
        },
        "epsilon": 0.001
    }"#;
    let out = run_bytes(scenario, &RunOptions::default()).unwrap();
    assert_eq!(out.exit_code(), 0);
    let r = &out.report.result;
    assert_eq!(r["status"], "not-valid");
    assert!(r["primal_value"].as_f64().unwrap() > 1.0 + 1e-6);
}

#[test]
fn duality_report() {
    let (code, report, csv, _dir) = run_fixture("duality_min.json", &[]);
    assert_eq!(code, Some(0));
    let r = &report["result"];
    let (p, d) = (r["primal_value"].as_f64().unwrap(), r["dual_value"].as_f64().unwrap());
    assert!((p - d).abs() <= 1e-6);
    assert_eq!(r["weak_duality_holds"], true);
    assert!(r["dual_max_shortfall"].as_f64().unwrap() <= 1e-9);
    // Normalization only applies to functions bounded by 1.
    assert!(r["normalized_dual"].is_null());
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn oracle_check_verb() {
    let dir = tempfile::tempdir().unwrap();
    let out = emerge(
        &[
            "oracle-check",
            "--scenario",
            fixture("oracle_max.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["agree"], true);
    assert_eq!(report["result"]["exact"], true);

    // The verb refuses other kinds.
    let wrong = emerge(
        &[
            "oracle-check",
            "--scenario",
            fixture("validity_max.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn merge_flags_identical_subclass() {
    let (code, report, csv, _dir) = run_fixture("merge_identical.json", &[]);
    assert_eq!(code, Some(0));
    let values = report["result"]["values"].as_array().unwrap();
    assert_eq!(values[0]["value"], 1.5);
    assert_eq!(values[0]["inside_subclass"], true);
    assert_eq!(values[1]["value"], 2.5);
    assert_eq!(values[1]["inside_subclass"], false);
    assert_eq!(csv, "e1,e2,value,inside_subclass\n2,2,1.5,true\n0,4,2.5,false\n");
}

#[test]
fn simulate_report_and_overrides() {
    let (code, report, _csv, _dir) =
        run_fixture("simulate_exchangeable.json", &["--reps", "20000", "--seed", "9"]);
    assert_eq!(code, Some(0));
    assert_eq!(report["seed"], 9);
    let sim = &report["result"]["simulation"];
    assert_eq!(sim["reps"], 20000);
    assert_eq!(sim["verdict"], "valid");
    assert_eq!(sim["admissibility"], "unknown (open question)");
    assert_eq!(report["result"]["incomparability"]["incomparable"], true);
}

#[test]
fn reports_are_reproducible_and_seed_sensitive() {
    let bytes = std::fs::read(fixture("simulate_exchangeable.json")).unwrap();
    let opts = |seed| RunOptions {
        seed: Some(seed),
        reps: Some(50_000),
        tol: None,
    };
    let dump = |o: &emerge_cli::Outcome| serde_json::to_vec_pretty(&o.report).unwrap();
    let a = run_bytes(&bytes, &opts(1)).unwrap();
    let b = run_bytes(&bytes, &opts(1)).unwrap();
    let c = run_bytes(&bytes, &opts(2)).unwrap();
    assert_eq!(dump(&a), dump(&b));
    assert_ne!(dump(&a), dump(&c));
}

#[test]
fn input_errors_exit_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind":"validity","grid":{"source":"sampled","function":{"id":"max"},"theta":2.0,"axes":[{"points":[0.0,1.0,2.0]}]},"marginals":[{"atoms":[0.5],"probs":[1.0]}]}"#).unwrap();
    let out = emerge(
        &["run", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("marginals[0]"));
    assert!(!dir.path().join("report.json").exists());

    let missing = emerge(&["run", "--scenario", "/nonexistent.json", "--out", "/tmp"], &[]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn incomparability_needs_the_exchangeable_rule() {
    let scenario = br#"{
        "kind": "simulate",
        "rule": { "id": "weighted", "lambda": [0.5, 0.5, 0.0] },
        "sampler": { "id": "iid-exponential", "k": 2 },
        "reps": 100,
        "incomparability": { "lambda": [0.5, 0.5, 0.0], "axis": [0.0, 1.0] }
    }"#;
    let err = run_bytes(scenario, &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("incomparability"));
}

#[test]
fn solver_errors_exit_three() {
    let e: CliError = emerge_core::error::Error::Consistency("x".into()).into();
    assert_eq!(e.exit_code(), 3);
    let e: CliError =
        emerge_core::error::Error::Solver(emerge_core::lp::LpError::Unbounded).into();
    assert_eq!(e.exit_code(), 3);
}

fn ladder_scenario() -> Vec<u8> {
    std::fs::read(fixture("dominate_weighted.json")).unwrap()
}

#[test]
fn schedule_errors_shrink_down_the_epsilon_ladder() {
    let out = schedule_bytes(
        &ladder_scenario(),
        &[1e-1, 1e-2, 1e-3],
        &[2.0, 4.0, 8.0],
        Some(2),
        &RunOptions::default(),
    )
    .unwrap();
    let cells = out.report.result["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 9);
    for chunk in cells.chunks(3) {
        let errs: Vec<f64> = chunk.iter().map(|c| c["lambda_error"].as_f64().unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        // The shrunk mass 0.7 eps / (1 + eps) lands on the constant.
        for (err, eps) in errs.iter().zip([1e-1, 1e-2, 1e-3]) {
            assert!((err - 0.7 * eps / (1.0 + eps)).abs() < 1e-6, "{err} at {eps}");
        }
    }
}

#[test]
fn schedule_single_cell_matches_run() {
    let bytes = ladder_scenario();
    let sched = schedule_bytes(&bytes, &[1e-3], &[4.0], None, &RunOptions::default()).unwrap();
    let run = run_bytes(&bytes, &RunOptions::default()).unwrap();
    assert_eq!(
        sched.report.result["cells"][0]["lambda"],
        run.report.result["report"]["lambda"]
    );
}

#[test]
fn schedule_rejects_bad_ladders() {
    let bytes = ladder_scenario();
    let opts = RunOptions::default();
    for (eps, thetas) in [
        (vec![], vec![2.0]),
        (vec![1e-2], vec![]),
        (vec![1e-2, 1e-1, 1e-3], vec![2.0]),
        (vec![1e-2], vec![4.0, 4.0]),
    ] {
        let err = schedule_bytes(&bytes, &eps, &thetas, None, &opts).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}

#[test]
fn schedule_records_failing_cells() {
    // theta below 1 leaves no room above 1 on the axes; such cells fail
    // individually without sinking the table.
    let out = schedule_bytes(&ladder_scenario(), &[1e-2], &[4.0, 0.5], None, &RunOptions::default()).unwrap();
    let cells = out.report.result["cells"].as_array().unwrap();
    assert_eq!(cells[0]["status"], "ok");
    assert_eq!(cells[1]["status"], "error");
    assert!(cells[1]["error"].is_string());
}

#[test]
fn schedule_verb_honours_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let out = emerge(
        &[
            "schedule",
            "--scenario",
            fixture("dominate_weighted.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--epsilons",
            "0.1,0.01",
            "--thetas",
            "2,4",
        ],
        &[("EMERGE_THREADS", "1")],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
