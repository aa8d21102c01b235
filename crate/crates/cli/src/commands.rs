use std::fs;
use std::path::Path;

use homoglab::anomalous::{build_u0, recovery_energy, AnomalousError, Profile, SpectralParams};
use homoglab::cell::{homogenize_general, CellError, ExtrapolationResult, PeriodicCoefficient, SolverConfig};
use homoglab::laminate::{
    check_conditions_2d, check_conditions_3d, homogenize_laminate, v_space_dim, verify_kernel_identity,
    ConditionReport, LaminateError, LaminateSpec,
};
use homoglab::linalg::{is_positive_definite, sym_eig};
use homoglab::{SquareMat, SymMat, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, GridSource, LaminateInput, Params};
use crate::output::{flag, int, num, Table, PLOT_PREAMBLE};

#[derive(Debug)]
pub enum Failure {
    /// Bad input discovered while running (exit code 1).
    Validation(String),
    /// Non-convergence or a violated numerical bound (exit code 2).
    Numerical(String),
}

impl From<LaminateError> for Failure {
    fn from(e: LaminateError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<CellError> for Failure {
    fn from(e: CellError) -> Self {
        match e {
            CellError::NonConvergence { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<AnomalousError> for Failure {
    fn from(e: AnomalousError) -> Self {
        match e {
            AnomalousError::TailBound { .. } | AnomalousError::SlMismatch { .. } | AnomalousError::MeanIdentity { .. } => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

pub struct Outcome {
    pub results: Value,
    pub diagnostics: Value,
    pub tables: Vec<Table>,
    pub plot: String,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

pub fn tensor_json(m: &SymMat) -> Value {
    json!(m.rows())
}

fn tensor_table(file: &str, m: &SymMat) -> Table {
    let mut t = Table::new(file, &["i", "j", "value"]);
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            t.push(vec![int(i + 1), int(j + 1), num(m.get(i, j))]);
        }
    }
    t
}

fn format_tensor(m: &SymMat) -> String {
    let rows: Vec<String> = m
        .rows()
        .iter()
        .map(|r| r.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", "))
        .collect();
    format!("[{}]", rows.join("; "))
}

fn upper_names(d: usize) -> Vec<&'static str> {
    if d == 2 {
        vec!["a11", "a12", "a22"]
    } else {
        vec!["a11", "a12", "a13", "a22", "a23", "a33"]
    }
}

fn extrapolation_table(res: &ExtrapolationResult, d: usize) -> Table {
    let mut header = vec!["delta"];
    header.extend(upper_names(d));
    let mut t = Table::new("extrapolation.csv", &header);
    for (delta, a) in res.deltas.iter().zip(&res.tensors) {
        let mut row = vec![num(*delta)];
        row.extend(a.upper().into_iter().map(num));
        t.push(row);
    }
    t
}

fn extrapolation_plot(d: usize) -> String {
    let cols = upper_names(d).len();
    let series: Vec<String> = (0..cols).map(|k| format!("'extrapolation.csv' using 1:{} with linespoints", k + 2)).collect();
    format!("{PLOT_PREAMBLE}set logscale x\nset xlabel 'delta'\nset ylabel 'A*_delta entry'\nplot {}\n", series.join(", \\\n     "))
}

fn solver_diagnostics(res: &ExtrapolationResult) -> Value {
    json!({
        "fit_residual": res.fit_residual,
        "monotone": res.monotone,
        "stalled": res.stalled,
        "psd_projection": res.psd_projection,
        "max_residual": res.max_residual,
        "cg_iterations": res.iterations,
    })
}

fn laminate_results(spec: &LaminateSpec, a_tol: f64) -> Result<(Value, SymMat), Failure> {
    let hom = homogenize_laminate(spec, a_tol);
    let kernel: Vec<Vec<f64>> = hom.kernel.iter().map(Vector::to_vec).collect();
    Ok((
        json!({
            "tensor": tensor_json(&hom.tensor),
            "a": hom.a_value,
            "branch": hom.branch,
            "pd": hom.pd,
            "kernel": kernel,
            "v_space_dim": v_space_dim(spec)?,
        }),
        hom.tensor,
    ))
}

pub fn run(cfg: &ExperimentConfig, seed: u64, config_dir: &Path) -> Result<Outcome, Failure> {
    match &cfg.params {
        Params::HomogenizeLaminate { laminate, a_tol } => {
            let spec = laminate.spec();
            let tol = a_tol.unwrap_or_else(|| spec.default_a_tol());
            let (results, tensor) = laminate_results(&spec, tol)?;
            Ok(Outcome {
                summary: vec![
                    format!("A* = {}", format_tensor(&tensor)),
                    format!("a = {}, pd = {}", results["a"], results["pd"]),
                ],
                results,
                diagnostics: json!({ "a_tol": tol, "min_eigenvalue": sym_eig(&tensor).min() }),
                tables: vec![tensor_table("tensor.csv", &tensor)],
                plot: format!("{PLOT_PREAMBLE}set title 'effective tensor'\nplot 'tensor.csv' using 2:1:3 with image\n"),
            })
        }
        Params::HomogenizeGrid { source, solver } => {
            let coeff = match source {
                GridSource::File(p) => {
                    let path = if p.is_absolute() { p.clone() } else { config_dir.join(p) };
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::Validation(format!("grid_file {}: {e}", path.display())))?;
                    PeriodicCoefficient::from_text(&text)?
                }
                GridSource::Constant { matrix, n_grid } => {
                    let m = SymMat::from_rows(matrix).map_err(|e| Failure::Validation(format!("constant: {e}")))?;
                    PeriodicCoefficient::constant(m.dim(), *n_grid, m)?
                }
                GridSource::Laminate { laminate, n_grid } => PeriodicCoefficient::from_laminate(&laminate.spec(), *n_grid)?,
            };
            let res = homogenize_general(&coeff, solver)?;
            let d = coeff.dim();
            Ok(Outcome {
                results: json!({
                    "estimate": tensor_json(&res.estimate),
                    "dim": d,
                    "n_grid": coeff.n_grid(),
                    "pd": is_positive_definite(&res.estimate, 1e-8),
                    "deltas": res.deltas,
                }),
                diagnostics: solver_diagnostics(&res),
                tables: vec![extrapolation_table(&res, d), tensor_table("tensor.csv", &res.estimate)],
                plot: extrapolation_plot(d),
                summary: vec![
                    format!("A* ≈ {}", format_tensor(&res.estimate)),
                    format!("fit residual {:e}, stalled = {}", res.fit_residual, res.stalled),
                ],
            })
        }
        Params::VerifyConditions { laminate, xi, tol, trials } => verify(laminate, xi.as_deref(), *tol, *trials, seed),
        Params::Counterexample { theta, n_grid, solver } => counterexample(*theta, *n_grid, solver),
        Params::RecoverySweep { c, theta, u, eps_list, n_fine } => {
            let params = SpectralParams::new(*c, *theta)?;
            let mut t = Table::new("recovery.csv", &["eps", "inv_eps", "energy_eps", "limit_energy", "gap", "l2_sq"]);
            let mut summary = Vec::new();
            let mut limit = 0.0;
            for &eps in eps_list {
                let r = recovery_energy(&params, u, eps, *n_fine)?;
                limit = r.limit_energy;
                t.push(vec![num(eps), num((1.0 / eps).round()), num(r.energy_eps), num(r.limit_energy), num(r.gap), num(r.l2_sq)]);
                summary.push(format!("eps = 1/{:.0}: F_eps = {:.9}, gap = {:.4e}", 1.0 / eps, r.energy_eps, r.gap));
            }
            let branch_difference = if !u.x2_independent() {
                None
            } else {
                let field = u.sample_1d(*n_fine + 1)?;
                let br = build_u0(&params, &field)?;
                let diff = br.phase_one.values().iter().zip(br.phase_c.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                Some((diff, br.mean_deviation))
            };
            Ok(Outcome {
                results: json!({
                    "limit_energy": limit,
                    "alpha": params.alpha(),
                    "c_theta": params.c_theta(),
                    "branch_sup_difference": branch_difference.map(|b| b.0),
                }),
                diagnostics: json!({
                    "mean_identity_deviation": branch_difference.map(|b| b.1),
                    "n_fine": n_fine,
                }),
                tables: vec![t],
                plot: format!(
                    "{PLOT_PREAMBLE}set logscale xy\nset xlabel '1/eps'\nset ylabel 'relative gap'\nplot 'recovery.csv' using 2:5 with linespoints\n"
                ),
                summary,
            })
        }
    }
}

fn condition_rows(t: &mut Table, report: &ConditionReport) {
    for s in &report.details {
        t.push(vec![s.name.clone(), num(s.value), num(s.threshold), flag(s.holds)]);
    }
}

fn report_json(r: &ConditionReport) -> Value {
    json!({ "h2_holds": r.h2_holds, "details": r.details })
}

fn verify(laminate: &LaminateInput, xi: Option<&[f64]>, tol: f64, trials: usize, seed: u64) -> Result<Outcome, Failure> {
    let spec = laminate.spec();
    let d = spec.dim();
    let report = match (d, xi) {
        (2, Some(xi)) => {
            let xi = Vector::new(xi).map_err(|e| Failure::Validation(format!("xi: {e}")))?;
            Some(check_conditions_2d(&spec, &xi, tol)?)
        }
        (3, _) => Some(check_conditions_3d(&spec, tol)?),
        _ => None,
    };
    let (lam, tensor) = laminate_results(&spec, spec.default_a_tol())?;
    let identity = verify_kernel_identity(&spec, 1e-8)?;
    let mut cond = Table::new("conditions.csv", &["name", "value", "threshold", "holds"]);
    if let Some(r) = &report {
        condition_rows(&mut cond, r);
    }
    let mut tables = vec![cond, tensor_table("tensor.csv", &tensor)];
    let mut summary = vec![
        format!("A* = {}", format_tensor(&tensor)),
        format!("kernel identity ker A* = V⊥: {identity}"),
    ];
    if let Some(r) = &report {
        summary.push(format!("conditions hold: {}", r.h2_holds));
    }
    let mut trial_summary = Value::Null;
    let mut plot = format!("{PLOT_PREAMBLE}plot 'tensor.csv' using 2:1:3 with image\n");
    if trials > 0 {
        let (t, s) = random_trials(d, trials, seed)?;
        summary.push(format!(
            "{} random specs, {} satisfy the conditions, {} of those positive definite",
            trials, s.0, s.1
        ));
        trial_summary = json!({ "trials": trials, "conditions_hold": s.0, "pd_when_conditions_hold": s.1, "seed": seed });
        tables.push(t);
        plot = format!(
            "{PLOT_PREAMBLE}set xlabel 'trial'\nset ylabel 'min eigenvalue of A*'\nplot 'trials.csv' using 1:4 with points\n"
        );
    }
    Ok(Outcome {
        results: json!({
            "conditions": report.as_ref().map(report_json),
            "kernel_identity": identity,
            "laminate": lam,
            "random_trials": trial_summary,
        }),
        diagnostics: json!({ "tol": tol }),
        tables,
        plot,
        summary,
    })
}

fn as_square(m: &SymMat) -> SquareMat {
    let cols: Vec<Vector> = (0..m.dim()).map(|j| m.mul_vec(&Vector::basis(m.dim(), j))).collect();
    SquareMat::from_columns(&cols).expect("square")
}

fn random_psd(rng: &mut impl Rng, d: usize, rank: usize) -> SymMat {
    (0..rank).fold(SymMat::zeros(d), |m, _| {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m + SymMat::outer(&Vector::new(&x).expect("finite"))
    })
}

fn random_unit(rng: &mut impl Rng, d: usize) -> Vector {
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Vector::new(&x).expect("finite");
        if x.norm() > 0.1 {
            return x.normalized();
        }
    }
}

/// Random members of the structured family (ξ⊗ξ over a definite phase in
/// 2D, two rank-two phases in 3D), all laminated along e1.
fn random_trials(d: usize, trials: usize, seed: u64) -> Result<(Table, (usize, usize)), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Table::new("trials.csv", &["trial", "theta", "conditions_hold", "min_eigenvalue", "pd"]);
    let (mut holds, mut pd_holds) = (0, 0);
    for k in 0..trials {
        let theta = rng.gen_range(0.05..0.95);
        let (spec, report) = if d == 2 {
            let xi = random_unit(&mut rng, 2);
            let a2 = random_psd(&mut rng, 2, 2) + SymMat::identity(2) * 0.05;
            let spec = LaminateSpec::along_e1(SymMat::outer(&xi), a2, theta)?;
            let r = check_conditions_2d(&spec, &xi, 1e-10)?;
            (spec, r)
        } else {
            let phase = |rng: &mut ChaCha8Rng| {
                // P B P with P the projector onto η⊥: rank two with kernel η.
                let p = SymMat::identity(3) - SymMat::outer(&random_unit(rng, 3));
                let b = random_psd(rng, 3, 3) + SymMat::identity(3) * 0.2;
                b.conjugate(&as_square(&p))
            };
            let (a1, a2) = (phase(&mut rng), phase(&mut rng));
            let spec = LaminateSpec::along_e1(a1, a2, theta)?;
            let r = check_conditions_3d(&spec, 1e-10)?;
            (spec, r)
        };
        let hom = homogenize_laminate(&spec, spec.default_a_tol());
        let min = sym_eig(&hom.tensor).min();
        if report.h2_holds {
            holds += 1;
            if hom.pd {
                pd_holds += 1;
            }
        }
        t.push(vec![int(k), num(theta), flag(report.h2_holds), num(min), flag(hom.pd)]);
    }
    Ok((t, (holds, pd_holds)))
}

fn counterexample(theta: f64, n_grid: usize, solver: &SolverConfig) -> Result<Outcome, Failure> {
    let spec = LaminateSpec::along_e1(SymMat::outer(&Vector::basis(2, 1)), SymMat::identity(2), theta)?;
    let (lam, tensor) = laminate_results(&spec, spec.default_a_tol())?;
    let res = homogenize_general(&PeriodicCoefficient::from_laminate(&spec, n_grid)?, solver)?;
    let deviation = (res.estimate - tensor).max_abs();
    let pd = is_positive_definite(&tensor, 1e-10);
    Ok(Outcome {
        results: json!({
            "tensor": tensor_json(&tensor),
            "pd": pd,
            "a": lam["a"],
            "kernel": lam["kernel"],
            "cell_estimate": tensor_json(&res.estimate),
        }),
        diagnostics: {
            let mut d = solver_diagnostics(&res);
            d["formula_vs_cell_max_deviation"] = json!(deviation);
            d
        },
        tables: vec![tensor_table("tensor.csv", &tensor), extrapolation_table(&res, 2)],
        plot: extrapolation_plot(2),
        summary: vec![
            format!("A* = {} (pd = {pd})", format_tensor(&tensor)),
            format!("a = {}, cell solver at n = {n_grid}: {}", lam["a"], format_tensor(&res.estimate)),
        ],
    })
}
