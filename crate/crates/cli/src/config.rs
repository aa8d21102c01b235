//! Experiment configuration: a single JSON object with flat keys.
//!
//! Every config names its `command` and may give an `output_dir`. The
//! remaining keys depend on the command:
//!
//! | command | keys |
//! |---|---|
//! | `homogenize_laminate` | `phase1`, `phase2`, `theta`, `direction`, optional `a_tol` |
//! | `homogenize_grid` | one of `grid_file`, `constant` or the laminate keys; `n_grid` unless `grid_file`; solver keys |
//! | `verify_conditions` | laminate keys, optional `xi`, `tol`, `trials` |
//! | `counterexample` | optional `theta`, `n_grid`, solver keys |
//! | `recovery_sweep` | `c`, `theta`, `u`, `eps_list`, optional `n_fine` |
//!
//! Solver keys (all optional): `solver_tol`, `max_iter`, `delta0`, `levels`.
//! Matrices are arrays of rows.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use homoglab::anomalous::{periods, TestFunction};
use homoglab::cell::SolverConfig;
use homoglab::laminate::{LaminateError, LaminateSpec};
use homoglab::{SymMat, Vector};
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    HomogenizeLaminate,
    HomogenizeGrid,
    VerifyConditions,
    Counterexample,
    RecoverySweep,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::HomogenizeLaminate,
        Command::HomogenizeGrid,
        Command::VerifyConditions,
        Command::Counterexample,
        Command::RecoverySweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::HomogenizeLaminate => "homogenize_laminate",
            Command::HomogenizeGrid => "homogenize_grid",
            Command::VerifyConditions => "verify_conditions",
            Command::Counterexample => "counterexample",
            Command::RecoverySweep => "recovery_sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaminateInput {
    pub phase1: Vec<Vec<f64>>,
    pub phase2: Vec<Vec<f64>>,
    pub theta: f64,
    pub direction: Vec<f64>,
}

impl LaminateInput {
    pub fn spec(&self) -> LaminateSpec {
        build_spec(self).expect("validated at parse time")
    }
}

/// The spec, or the offending key and the reason.
fn build_spec(l: &LaminateInput) -> Result<LaminateSpec, (&'static str, String)> {
    let p1 = SymMat::from_rows(&l.phase1).map_err(|e| ("phase1", e.to_string()))?;
    let p2 = SymMat::from_rows(&l.phase2).map_err(|e| ("phase2", e.to_string()))?;
    let n = Vector::new(&l.direction).map_err(|e| ("direction", e.to_string()))?;
    LaminateSpec::new(p1, p2, l.theta, n).map_err(|e| {
        let key = match &e {
            LaminateError::Theta(_) => "theta",
            LaminateError::Direction(_) => "direction",
            LaminateError::NotPsd { phase, .. } => phase,
            _ => "",
        };
        (key, e.to_string())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridSource {
    /// Resolved against the config file's directory when relative.
    File(PathBuf),
    Constant { matrix: Vec<Vec<f64>>, n_grid: usize },
    Laminate { laminate: LaminateInput, n_grid: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    HomogenizeLaminate { laminate: LaminateInput, a_tol: Option<f64> },
    HomogenizeGrid { source: GridSource, solver: SolverConfig },
    VerifyConditions { laminate: LaminateInput, xi: Option<Vec<f64>>, tol: f64, trials: usize },
    Counterexample { theta: f64, n_grid: usize, solver: SolverConfig },
    RecoverySweep { c: f64, theta: f64, u: TestFunction, eps_list: Vec<f64>, n_fine: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub params: Params,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn command(&self) -> Command {
        match self.params {
            Params::HomogenizeLaminate { .. } => Command::HomogenizeLaminate,
            Params::HomogenizeGrid { .. } => Command::HomogenizeGrid,
            Params::VerifyConditions { .. } => Command::VerifyConditions,
            Params::Counterexample { .. } => Command::Counterexample,
            Params::RecoverySweep { .. } => Command::RecoverySweep,
        }
    }

    /// Canonical document; [`parse_config`] reads it back to an equal config.
    pub fn to_document(&self) -> Value {
        let mut m = Map::new();
        m.insert("command".into(), json!(self.command().as_str()));
        if let Some(dir) = &self.output_dir {
            m.insert("output_dir".into(), json!(dir.to_string_lossy()));
        }
        match &self.params {
            Params::HomogenizeLaminate { laminate, a_tol } => {
                put_laminate(&mut m, laminate);
                if let Some(t) = a_tol {
                    m.insert("a_tol".into(), json!(t));
                }
            }
            Params::HomogenizeGrid { source, solver } => {
                match source {
                    GridSource::File(p) => {
                        m.insert("grid_file".into(), json!(p.to_string_lossy()));
                    }
                    GridSource::Constant { matrix, n_grid } => {
                        m.insert("constant".into(), json!(matrix));
                        m.insert("n_grid".into(), json!(n_grid));
                    }
                    GridSource::Laminate { laminate, n_grid } => {
                        put_laminate(&mut m, laminate);
                        m.insert("n_grid".into(), json!(n_grid));
                    }
                }
                put_solver(&mut m, solver);
            }
            Params::VerifyConditions { laminate, xi, tol, trials } => {
                put_laminate(&mut m, laminate);
                if let Some(xi) = xi {
                    m.insert("xi".into(), json!(xi));
                }
                m.insert("tol".into(), json!(tol));
                m.insert("trials".into(), json!(trials));
            }
            Params::Counterexample { theta, n_grid, solver } => {
                m.insert("theta".into(), json!(theta));
                m.insert("n_grid".into(), json!(n_grid));
                put_solver(&mut m, solver);
            }
            Params::RecoverySweep { c, theta, u, eps_list, n_fine } => {
                m.insert("c".into(), json!(c));
                m.insert("theta".into(), json!(theta));
                m.insert("u".into(), json!(u.to_string()));
                m.insert("eps_list".into(), json!(eps_list));
                m.insert("n_fine".into(), json!(n_fine));
            }
        }
        Value::Object(m)
    }
}

fn put_laminate(m: &mut Map<String, Value>, l: &LaminateInput) {
    m.insert("phase1".into(), json!(l.phase1));
    m.insert("phase2".into(), json!(l.phase2));
    m.insert("theta".into(), json!(l.theta));
    m.insert("direction".into(), json!(l.direction));
}

fn put_solver(m: &mut Map<String, Value>, s: &SolverConfig) {
    m.insert("solver_tol".into(), json!(s.tol));
    m.insert("max_iter".into(), json!(s.max_iter));
    m.insert("delta0".into(), json!(s.delta0));
    m.insert("levels".into(), json!(s.levels));
}

/// One validation failure, located by the key path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(Issue::to_string).collect();
        write!(f, "invalid config: {}", lines.join("; "))
    }
}

impl std::error::Error for ConfigError {}

struct Reader<'a> {
    obj: &'a Map<String, Value>,
    used: BTreeSet<&'static str>,
    issues: Vec<Issue>,
}

impl<'a> Reader<'a> {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { path: path.into(), message: message.into() });
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.obj.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.obj.contains_key(key)
    }

    fn required(&mut self, key: &'static str) -> Option<&'a Value> {
        let v = self.get(key);
        if v.is_none() {
            self.issue(key, "missing key");
        }
        v
    }

    fn as_f64(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.issue(path, format!("expected a number, got {v}"));
                None
            }
        }
    }

    fn num(&mut self, key: &'static str) -> Option<f64> {
        let v = self.required(key)?;
        self.as_f64(key, v)
    }

    fn num_or(&mut self, key: &'static str, default: f64) -> Option<f64> {
        match self.get(key) {
            None => Some(default),
            Some(v) => self.as_f64(key, v),
        }
    }

    fn count(&mut self, key: &'static str, default: Option<usize>) -> Option<usize> {
        let v = match (self.get(key), default) {
            (None, Some(d)) => return Some(d),
            (None, None) => {
                self.issue(key, "missing key");
                return None;
            }
            (Some(v), _) => v,
        };
        match v.as_u64() {
            Some(n) => Some(n as usize),
            None => {
                self.issue(key, format!("expected a non-negative integer, got {v}"));
                None
            }
        }
    }

    fn string(&mut self, key: &'static str) -> Option<&'a str> {
        let v = self.required(key)?;
        match v.as_str() {
            Some(s) => Some(s),
            None => {
                self.issue(key, format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn vector_at(&mut self, path: &str, v: &Value) -> Option<Vec<f64>> {
        let Some(items) = v.as_array() else {
            self.issue(path, format!("expected an array of numbers, got {v}"));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, x) in items.iter().enumerate() {
            match self.as_f64(&format!("{path}[{i}]"), x) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn vector(&mut self, key: &'static str) -> Option<Vec<f64>> {
        let v = self.required(key)?;
        self.vector_at(key, v)
    }

    fn matrix(&mut self, key: &'static str) -> Option<Vec<Vec<f64>>> {
        let v = self.required(key)?;
        let Some(rows) = v.as_array() else {
            self.issue(key, "expected an array of rows");
            return None;
        };
        let mut out = Vec::with_capacity(rows.len());
        let mut ok = true;
        for (i, r) in rows.iter().enumerate() {
            match self.vector_at(&format!("{key}[{i}]"), r) {
                Some(r) => out.push(r),
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        let d = out.len();
        if !(2..=3).contains(&d) || out.iter().any(|r| r.len() != d) {
            self.issue(key, format!("expected a 2×2 or 3×3 matrix, got {d} rows"));
            return None;
        }
        Some(out)
    }

    fn theta(&mut self, key: &'static str, default: Option<f64>) -> Option<f64> {
        let t = match default {
            Some(d) => self.num_or(key, d)?,
            None => self.num(key)?,
        };
        if !(t > 0.0 && t < 1.0) {
            self.issue(key, format!("must lie in (0, 1), got {t}"));
            return None;
        }
        Some(t)
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Option<f64> {
        let x = self.num_or(key, default)?;
        if x <= 0.0 {
            self.issue(key, format!("must be positive, got {x}"));
            return None;
        }
        Some(x)
    }

    fn laminate(&mut self) -> Option<LaminateInput> {
        let phase1 = self.matrix("phase1");
        let phase2 = self.matrix("phase2");
        let theta = self.theta("theta", None);
        let direction = self.vector("direction");
        let input = LaminateInput { phase1: phase1?, phase2: phase2?, theta: theta?, direction: direction? };
        let d = input.phase1.len();
        if input.phase2.len() != d {
            self.issue("phase2", format!("dimension {} differs from phase1 ({d})", input.phase2.len()));
            return None;
        }
        if input.direction.len() != d {
            self.issue("direction", format!("expected {d} entries, got {}", input.direction.len()));
            return None;
        }
        if let Err((path, e)) = build_spec(&input) {
            self.issue(path, e);
            return None;
        }
        Some(input)
    }

    fn n_grid(&mut self, default: Option<usize>) -> Option<usize> {
        let n = self.count("n_grid", default)?;
        if n < 4 || !n.is_power_of_two() {
            self.issue("n_grid", format!("must be a power of two ≥ 4, got {n}"));
            return None;
        }
        Some(n)
    }

    fn solver(&mut self) -> Option<SolverConfig> {
        let d = SolverConfig::default();
        let tol = self.positive("solver_tol", d.tol);
        let max_iter = self.count("max_iter", Some(d.max_iter));
        let delta0 = self.positive("delta0", d.delta0);
        let levels = self.count("levels", Some(d.levels));
        if let Some(l) = levels {
            if l < 2 {
                self.issue("levels", format!("at least two δ levels are required, got {l}"));
                return None;
            }
        }
        Some(SolverConfig { tol: tol?, max_iter: max_iter?, delta0: delta0?, levels: levels? })
    }
}

fn parse_params(r: &mut Reader<'_>, command: Command) -> Option<Params> {
    match command {
        Command::HomogenizeLaminate => {
            let laminate = r.laminate();
            let a_tol = match r.get("a_tol") {
                None => Some(None),
                Some(v) => r.as_f64("a_tol", v).map(Some),
            };
            Some(Params::HomogenizeLaminate { laminate: laminate?, a_tol: a_tol? })
        }
        Command::HomogenizeGrid => {
            let sources = [r.has("grid_file"), r.has("constant"), r.has("phase1")];
            let source = match sources.iter().filter(|&&b| b).count() {
                1 if sources[0] => r.string("grid_file").map(|p| GridSource::File(PathBuf::from(p))),
                1 if sources[1] => {
                    let matrix = r.matrix("constant");
                    let n_grid = r.n_grid(None);
                    Some(GridSource::Constant { matrix: matrix?, n_grid: n_grid? })
                }
                1 => {
                    let laminate = r.laminate();
                    let n_grid = r.n_grid(None);
                    Some(GridSource::Laminate { laminate: laminate?, n_grid: n_grid? })
                }
                _ => {
                    r.issue("", "exactly one of grid_file, constant or phase1/phase2/theta/direction is required");
                    None
                }
            };
            let solver = r.solver();
            Some(Params::HomogenizeGrid { source: source?, solver: solver? })
        }
        Command::VerifyConditions => {
            let laminate = r.laminate();
            let xi = match r.get("xi") {
                None => Some(None),
                Some(v) => r.vector_at("xi", v).map(Some),
            };
            let tol = r.positive("tol", 1e-10);
            let trials = r.count("trials", Some(0));
            Some(Params::VerifyConditions { laminate: laminate?, xi: xi?, tol: tol?, trials: trials? })
        }
        Command::Counterexample => {
            let theta = r.theta("theta", Some(0.5));
            let n_grid = r.n_grid(Some(64));
            let solver = r.solver();
            Some(Params::Counterexample { theta: theta?, n_grid: n_grid?, solver: solver? })
        }
        Command::RecoverySweep => {
            let c = r.num("c");
            if let Some(c) = c {
                if c <= 1.0 {
                    r.issue("c", format!("must exceed 1, got {c}"));
                }
            }
            let theta = r.theta("theta", None);
            let u = r.string("u").and_then(|s| match s.parse::<TestFunction>() {
                Ok(u) => Some(u),
                Err(e) => {
                    r.issue("u", e.to_string());
                    None
                }
            });
            let eps_list = r.vector("eps_list");
            let mut reciprocals = Vec::new();
            if let Some(list) = &eps_list {
                if list.is_empty() {
                    r.issue("eps_list", "must not be empty");
                }
                for (i, &e) in list.iter().enumerate() {
                    match periods(e) {
                        Some(m) => reciprocals.push(m),
                        None => r.issue(format!("eps_list[{i}]"), "eps must be reciprocal of an integer"),
                    }
                }
            }
            let n_fine = r.count("n_fine", Some(2048));
            if let Some(n) = n_fine {
                for m in &reciprocals {
                    if n % m != 0 || n / m < 16 {
                        r.issue("n_fine", format!("n_fine·eps must be an integer ≥ 16 for eps = 1/{m}, got n_fine = {n}"));
                        break;
                    }
                }
            }
            let c = c.filter(|&c| c > 1.0);
            Some(Params::RecoverySweep { c: c?, theta: theta?, u: u?, eps_list: eps_list?, n_fine: n_fine? })
        }
    }
}

/// Parses and validates a config. `command` is the command given on the
/// command line; when the document also names one, the two must agree.
/// All problems are collected before failing.
pub fn parse_config(document: &str, command: Option<Command>) -> Result<ExperimentConfig, ConfigError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ConfigError {
        issues: vec![Issue { path: String::new(), message: format!("malformed document: {e}") }],
    })?;
    let Some(obj) = value.as_object() else {
        return Err(ConfigError { issues: vec![Issue { path: String::new(), message: "expected a JSON object".into() }] });
    };
    let mut r = Reader { obj, used: BTreeSet::new(), issues: Vec::new() };

    let named = match r.get("command") {
        None => None,
        Some(Value::String(s)) => match s.parse::<Command>() {
            Ok(c) => Some(c),
            Err(e) => {
                r.issue("command", e);
                None
            }
        },
        Some(v) => {
            r.issue("command", format!("expected a string, got {v}"));
            None
        }
    };
    let command = match (named, command) {
        (Some(a), Some(b)) if a != b => {
            r.issue("command", format!("config is for {a} but {b} was requested"));
            None
        }
        (Some(a), _) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => {
            if !r.issues.iter().any(|i| i.path == "command") {
                r.issue("command", "missing key");
            }
            None
        }
    };
    let output_dir = match r.get("output_dir") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => {
            r.issue("output_dir", format!("expected a string, got {v}"));
            None
        }
    };
    let params = command.and_then(|c| parse_params(&mut r, c));
    if command.is_some() {
        let unknown: Vec<String> = obj.keys().filter(|k| !r.used.contains(k.as_str())).cloned().collect();
        for k in unknown {
            r.issue(k, "unknown key");
        }
    }
    match params {
        Some(params) if r.issues.is_empty() => Ok(ExperimentConfig { params, output_dir }),
        _ => Err(ConfigError { issues: r.issues }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(doc: &str) -> Vec<String> {
        parse_config(doc, None).unwrap_err().issues.into_iter().map(|i| i.path).collect()
    }

    #[test]
    fn laminate_example_is_valid() {
        let doc = r#"{"command": "homogenize_laminate", "phase1": [[0,0],[0,1]], "phase2": [[1,0],[0,1]], "theta": 0.5, "direction": [1,0]}"#;
        let cfg = parse_config(doc, None).unwrap();
        assert_eq!(cfg.command(), Command::HomogenizeLaminate);
    }

    #[test]
    fn theta_out_of_range_names_key() {
        let doc = r#"{"command": "homogenize_laminate", "phase1": [[0,0],[0,1]], "phase2": [[1,0],[0,1]], "theta": 1.5, "direction": [1,0]}"#;
        assert_eq!(paths(doc), vec!["theta"]);
    }

    #[test]
    fn eps_must_be_reciprocal() {
        let doc = r#"{"command": "recovery_sweep", "c": 2, "theta": 0.5, "u": "sin_1", "eps_list": [0.3]}"#;
        let err = parse_config(doc, None).unwrap_err();
        assert_eq!(err.issues.len(), 1);
        assert_eq!(err.issues[0].path, "eps_list[0]");
        assert_eq!(err.issues[0].message, "eps must be reciprocal of an integer");
    }

    #[test]
    fn failures_are_aggregated() {
        let doc = r#"{"command": "recovery_sweep", "c": 1, "theta": 0, "u": "cos", "eps_list": [0.125, 0.3], "extra": 1}"#;
        let mut p = paths(doc);
        p.sort();
        assert_eq!(p, vec!["c", "eps_list[1]", "extra", "theta", "u"]);
    }

    #[test]
    fn missing_and_unknown_command() {
        assert_eq!(paths("{}"), vec!["command"]);
        assert_eq!(paths(r#"{"command": "fly"}"#), vec!["command"]);
        let err = parse_config(r#"{"command": "counterexample"}"#, Some(Command::RecoverySweep)).unwrap_err();
        assert_eq!(err.issues[0].path, "command");
    }

    #[test]
    fn command_may_come_from_caller() {
        let cfg = parse_config("{}", Some(Command::Counterexample)).unwrap();
        assert_eq!(cfg.params, Params::Counterexample { theta: 0.5, n_grid: 64, solver: SolverConfig::default() });
    }

    #[test]
    fn non_psd_phase_is_reported_at_phase() {
        let doc = r#"{"command": "homogenize_laminate", "phase1": [[-1,0],[0,1]], "phase2": [[1,0],[0,1]], "theta": 0.5, "direction": [1,0]}"#;
        assert_eq!(paths(doc), vec!["phase1"]);
    }

    #[test]
    fn grid_sources_are_exclusive() {
        let doc = r#"{"command": "homogenize_grid", "grid_file": "a.txt", "constant": [[1,0],[0,1]], "n_grid": 8}"#;
        assert!(paths(doc).contains(&String::new()));
    }

    #[test]
    fn canonical_document_round_trips() {
        let docs = [
            r#"{"command": "homogenize_laminate", "phase1": [[0,0],[0,1]], "phase2": [[1,0],[0,1]], "theta": 0.25, "direction": [0.6,0.8], "a_tol": 1e-9}"#,
            r#"{"command": "homogenize_grid", "constant": [[2,0,0],[0,1,0],[0,0,1]], "n_grid": 8, "levels": 3, "output_dir": "o"}"#,
            r#"{"command": "homogenize_grid", "grid_file": "g.txt", "solver_tol": 1e-8}"#,
            r#"{"command": "verify_conditions", "phase1": [[1,0],[0,0]], "phase2": [[0,0],[0,1]], "theta": 0.5, "direction": [1,0], "xi": [0,1], "trials": 5}"#,
            r#"{"command": "counterexample", "theta": 0.3, "n_grid": 16}"#,
            r#"{"command": "recovery_sweep", "c": 3, "theta": 0.4, "u": "sin_1", "eps_list": [0.1, 0.05], "n_fine": 2000}"#,
        ];
        for doc in docs {
            let cfg = parse_config(doc, None).unwrap();
            let again = parse_config(&cfg.to_document().to_string(), None).unwrap();
            assert_eq!(again, cfg, "{doc}");
        }
    }
}
