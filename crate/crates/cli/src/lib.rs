//! Front end for the `homoglab` binary: config parsing, dispatch, and the
//! CSV / gnuplot / JSON report artifacts of each run.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure
//! (non-convergence or a violated numerical bound).

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::commands::Failure;
use crate::config::{parse_config, Command, ExperimentConfig};
use crate::output::{write_plot, write_tables, Artifact};

pub const DEFAULT_OUTPUT_DIR: &str = "homoglab-out";

#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug)]
pub struct RunReport {
    pub exit_code: i32,
    pub output_dir: PathBuf,
    pub report: Value,
    pub summary: Vec<String>,
}

fn status(code: i32) -> &'static str {
    match code {
        0 => "ok",
        1 => "validation_error",
        _ => "numerical_failure",
    }
}

/// Runs one invocation end to end. The report is written to
/// `<output_dir>/report.json` whenever the directory can be created.
pub fn execute(inv: &Invocation) -> RunReport {
    let started = Instant::now();
    let mut errors: Vec<String> = Vec::new();
    let mut config: Option<ExperimentConfig> = None;

    match fs::read_to_string(&inv.config) {
        Err(e) => errors.push(format!("cannot read config {}: {e}", inv.config.display())),
        Ok(text) => match parse_config(&text, Some(inv.command)) {
            Ok(c) => config = Some(c),
            Err(e) => errors.extend(e.issues.iter().map(ToString::to_string)),
        },
    }
    let output_dir = inv
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    let mut exit_code = if errors.is_empty() { 0 } else { 1 };
    let mut artifacts: Vec<Artifact> = Vec::new();
    let (mut results, mut diagnostics) = (Value::Null, Value::Null);
    let mut summary = Vec::new();

    if let Err(e) = fs::create_dir_all(&output_dir) {
        errors.push(format!("cannot create output directory {}: {e}", output_dir.display()));
        exit_code = 1;
    } else if let Some(cfg) = &config {
        let config_dir = inv.config.parent().map(Path::to_path_buf).unwrap_or_default();
        match commands::run(cfg, inv.seed, &config_dir) {
            Ok(outcome) => {
                let written = write_tables(&output_dir, &outcome.tables)
                    .and_then(|mut a| write_plot(&output_dir, &outcome.plot).map(|p| {
                        a.push(p);
                        a
                    }));
                match written {
                    Ok(a) => artifacts = a,
                    Err(e) => {
                        errors.push(format!("cannot write artifacts: {e}"));
                        exit_code = 1;
                    }
                }
                results = outcome.results;
                diagnostics = outcome.diagnostics;
                summary = outcome.summary;
            }
            Err(Failure::Validation(m)) => {
                errors.push(m);
                exit_code = 1;
            }
            Err(Failure::Numerical(m)) => {
                errors.push(m);
                exit_code = 2;
            }
        }
    }

    let report = json!({
        "command": inv.command.as_str(),
        "status": status(exit_code),
        "exit_code": exit_code,
        "seed": inv.seed,
        "inputs": config.as_ref().map(ExperimentConfig::to_document),
        "results": results,
        "diagnostics": diagnostics,
        "errors": errors,
        "artifacts": artifacts,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    if output_dir.is_dir() {
        let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
        if let Err(e) = fs::write(output_dir.join("report.json"), text) {
            eprintln!("cannot write report: {e}");
        }
    }
    RunReport { exit_code, output_dir, report, summary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn invoke(dir: &Path, command: Command, doc: &str) -> RunReport {
        let config = dir.join("config.json");
        fs::write(&config, doc).unwrap();
        execute(&Invocation { command, config, out: Some(dir.join("out")), seed: 7 })
    }

    fn read(dir: &Path, file: &str) -> String {
        fs::read_to_string(dir.join("out").join(file)).unwrap()
    }

    #[test]
    fn counterexample_run() {
        let dir = tempfile::tempdir().unwrap();
        let r = invoke(dir.path(), Command::Counterexample, r#"{"command": "counterexample", "n_grid": 16}"#);
        assert_eq!(r.exit_code, 0, "{:?}", r.report["errors"]);
        assert_eq!(r.report["results"]["tensor"], json!([[0.0, 0.0], [0.0, 1.0]]));
        assert_eq!(r.report["results"]["pd"], json!(false));
        let on_disk: Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
        assert_eq!(on_disk["status"], "ok");
    }

    #[test]
    fn constant_grid_homogenizes_to_itself() {
        let dir = tempfile::tempdir().unwrap();
        let r = invoke(
            dir.path(),
            Command::HomogenizeGrid,
            r#"{"command": "homogenize_grid", "constant": [[1,0],[0,1]], "n_grid": 8}"#,
        );
        assert_eq!(r.exit_code, 0);
        let est = &r.report["results"]["estimate"];
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((est[i][j].as_f64().unwrap() - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grid_file_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let spec = homoglab::laminate::LaminateSpec::along_e1(
            homoglab::SymMat::diag(&[1.0, 2.0]).unwrap(),
            homoglab::SymMat::diag(&[3.0, 1.0]).unwrap(),
            0.5,
        )
        .unwrap();
        let coeff = homoglab::cell::PeriodicCoefficient::from_laminate(&spec, 8).unwrap();
        fs::write(dir.path().join("grid.txt"), coeff.to_text()).unwrap();
        let r = invoke(dir.path(), Command::HomogenizeGrid, r#"{"command": "homogenize_grid", "grid_file": "grid.txt"}"#);
        assert_eq!(r.exit_code, 0, "{:?}", r.report["errors"]);
        let a11 = r.report["results"]["estimate"][0][0].as_f64().unwrap();
        assert!((a11 - 1.5).abs() < 1e-6);
    }

    #[test]
    fn artifacts_exist_with_declared_rows() {
        let dir = tempfile::tempdir().unwrap();
        let r = invoke(
            dir.path(),
            Command::RecoverySweep,
            r#"{"command": "recovery_sweep", "c": 2, "theta": 0.5, "u": "sin_1", "eps_list": [0.125, 0.0625, 0.03125, 0.015625], "n_fine": 1024}"#,
        );
        assert_eq!(r.exit_code, 0, "{:?}", r.report["errors"]);
        for a in r.report["artifacts"].as_array().unwrap() {
            let text = read(dir.path(), a["file"].as_str().unwrap());
            if a["kind"] == "csv" {
                assert!(!text.contains('\r'));
                assert_eq!(text.lines().count() - 1, a["rows"].as_u64().unwrap() as usize);
            }
        }
        assert_eq!(read(dir.path(), "recovery.csv").lines().count(), 5);
    }

    #[test]
    fn validation_errors_exit_one_and_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let r = invoke(
            dir.path(),
            Command::RecoverySweep,
            r#"{"command": "recovery_sweep", "c": 2, "theta": 0.5, "u": "sin_1", "eps_list": [0.3]}"#,
        );
        assert_eq!(r.exit_code, 1);
        let on_disk: Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
        assert_eq!(on_disk["status"], "validation_error");
        assert!(on_disk["errors"][0].as_str().unwrap().contains("eps must be reciprocal of an integer"));
    }

    #[test]
    fn non_convergence_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let checker = homoglab::cell::PeriodicCoefficient::from_fn(2, 32, |x| {
            let s = if (x[0] < 0.5) == (x[1] < 0.5) { 100.0 } else { 1.0 };
            homoglab::SymMat::diag(&[s, s]).unwrap()
        })
        .unwrap();
        fs::write(dir.path().join("checker.txt"), checker.to_text()).unwrap();
        let r = invoke(
            dir.path(),
            Command::HomogenizeGrid,
            r#"{"command": "homogenize_grid", "grid_file": "checker.txt", "max_iter": 1}"#,
        );
        assert_eq!(r.exit_code, 2, "{:?}", r.report["errors"]);
        assert_eq!(r.report["status"], "numerical_failure");
    }

    #[test]
    fn missing_config_file_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let r = execute(&Invocation {
            command: Command::Counterexample,
            config: dir.path().join("absent.json"),
            out: Some(dir.path().join("out")),
            seed: 0,
        });
        assert_eq!(r.exit_code, 1);
        assert!(dir.path().join("out/report.json").exists());
    }

    #[test]
    fn same_seed_same_bytes() {
        let doc = r#"{"command": "verify_conditions", "phase1": [[1,0],[0,0]], "phase2": [[0,0],[0,1]], "theta": 0.5, "direction": [1,0], "trials": 20}"#;
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert_eq!(invoke(a.path(), Command::VerifyConditions, doc).exit_code, 0);
        assert_eq!(invoke(b.path(), Command::VerifyConditions, doc).exit_code, 0);
        for f in ["trials.csv", "conditions.csv", "tensor.csv", "plot.gp"] {
            assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
        }
        assert_eq!(read(a.path(), "trials.csv").lines().count(), 21);
    }
}
