//! Periodic cell problems for grid-sampled coefficients.
//!
//! The unknown corrector v lives at cell centers of a uniform n^d grid over
//! the unit cell. Its gradient is taken with periodic forward differences and
//! paired with the coefficient of the same cell, so the discrete energy is
//!
//! E_δ(v) = mean over cells of (A + δI)(λ + Dv)·(λ + Dv).
//!
//! The minimizer solves DᵀA_δD v = −DᵀA_δλ, which is done by conjugate
//! gradients preconditioned with the FFT inverse of the same operator for
//! the cell-averaged coefficient.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::laminate::LaminateSpec;
use crate::linalg::{sym_eig, LinalgError, SymMat, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("invalid coefficient: {0}")]
    Coefficient(String),
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("shape mismatch: expected {expected} samples, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("malformed coefficient file: {0}")]
    Parse(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A Y_d-periodic PSD coefficient sampled at the cells of a uniform grid.
///
/// Cells are stored in row-major order with the last axis fastest; the cell
/// with index (i_0, …, i_{d-1}) is centered at ((i_0 + ½)/n, …).
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicCoefficient {
    dim: usize,
    n_grid: usize,
    samples: Vec<SymMat>,
}

const PSD_TOL: f64 = 1e-10;

impl PeriodicCoefficient {
    pub fn new(dim: usize, n_grid: usize, samples: Vec<SymMat>) -> Result<Self, CellError> {
        if dim != 2 && dim != 3 {
            return Err(CellError::Coefficient(format!("dimension {dim} is not 2 or 3")));
        }
        if n_grid < 4 || !n_grid.is_power_of_two() {
            return Err(CellError::Coefficient(format!("n_grid {n_grid} must be a power of two ≥ 4")));
        }
        let expected = n_grid.pow(dim as u32);
        if samples.len() != expected {
            return Err(CellError::Shape { expected, found: samples.len() });
        }
        for (i, s) in samples.iter().enumerate() {
            if s.dim() != dim {
                return Err(CellError::Coefficient(format!("sample {i} has dimension {}", s.dim())));
            }
            let e = sym_eig(s);
            if e.min() < -PSD_TOL * e.spectral_radius().max(1.0) {
                return Err(CellError::Coefficient(format!(
                    "sample {i} is not positive semidefinite (eigenvalue {:e})",
                    e.min()
                )));
            }
        }
        Ok(Self { dim, n_grid, samples })
    }

    pub fn constant(dim: usize, n_grid: usize, m: SymMat) -> Result<Self, CellError> {
        Self::new(dim, n_grid, vec![m; n_grid.pow(dim as u32)])
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(dim: usize, n_grid: usize, f: impl Fn(&[f64]) -> SymMat) -> Result<Self, CellError> {
        let total = n_grid.pow(dim as u32);
        let h = 1.0 / n_grid as f64;
        let samples = (0..total)
            .map(|idx| {
                let y: Vec<f64> = multi_index(idx, dim, n_grid).iter().map(|&i| (i as f64 + 0.5) * h).collect();
                f(&y)
            })
            .collect();
        Self::new(dim, n_grid, samples)
    }

    /// The laminate of `spec` (normal along a coordinate axis): phase 1 in the
    /// cells whose center satisfies y_k < θ.
    pub fn from_laminate(spec: &LaminateSpec, n_grid: usize) -> Result<Self, CellError> {
        let n = spec.direction();
        let axis = (0..spec.dim())
            .find(|&k| (n[k].abs() - 1.0).abs() < 1e-12)
            .ok_or_else(|| CellError::Argument("lamination normal must be a coordinate axis".into()))?;
        let (a1, a2, theta) = (*spec.phase1(), *spec.phase2(), spec.theta());
        Self::from_fn(spec.dim(), n_grid, |y| if y[axis] < theta { a1 } else { a2 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn samples(&self) -> &[SymMat] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> SymMat {
        let sum = self.samples.iter().fold(SymMat::zeros(self.dim), |acc, s| acc + *s);
        sum * (1.0 / self.samples.len() as f64)
    }

    /// Parses the text layout: a header line `dim n_grid channels`, then
    /// `channels` upper-triangle entries per cell, whitespace separated.
    pub fn from_text(text: &str) -> Result<Self, CellError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| CellError::Parse("empty input".into()))?;
        let fields: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| CellError::Parse(format!("bad header token {t:?}"))))
            .collect::<Result<_, _>>()?;
        let [dim, n_grid, channels] = fields[..] else {
            return Err(CellError::Parse("header must be `dim n_grid channels`".into()));
        };
        if dim != 2 && dim != 3 {
            return Err(CellError::Parse(format!("dimension {dim} is not 2 or 3")));
        }
        if channels != dim * (dim + 1) / 2 {
            return Err(CellError::Parse(format!("{channels} channels given, dimension {dim} needs {}", dim * (dim + 1) / 2)));
        }
        let values: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse().map_err(|_| CellError::Parse(format!("bad value {t:?}"))))
            .collect::<Result<_, _>>()?;
        let cells = n_grid
            .checked_pow(dim as u32)
            .ok_or_else(|| CellError::Parse("grid too large".into()))?;
        if values.len() != cells * channels {
            return Err(CellError::Shape { expected: cells * channels, found: values.len() });
        }
        let samples = values
            .chunks(channels)
            .map(|c| SymMat::from_upper(dim, c))
            .collect::<Result<_, _>>()?;
        Self::new(dim, n_grid, samples)
    }

    pub fn to_text(&self) -> String {
        let channels = self.dim * (self.dim + 1) / 2;
        let mut out = format!("{} {} {}\n", self.dim, self.n_grid, channels);
        for s in &self.samples {
            let row: Vec<String> = s.upper().iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// The coefficient with every sample conjugated by `q` and the grid
    /// permuted or mirrored accordingly. `q` must be a signed permutation.
    pub fn transformed(&self, q: &crate::linalg::SquareMat) -> Result<Self, CellError> {
        let d = self.dim;
        let n = self.n_grid;
        // q e_k = sign_k e_{perm_k}
        let mut perm = vec![0; d];
        let mut sign = vec![0i32; d];
        for k in 0..d {
            let col = q.column(k);
            let j = (0..d)
                .find(|&j| (col[j].abs() - 1.0).abs() < 1e-14)
                .ok_or_else(|| CellError::Argument("transformation must be a signed permutation".into()))?;
            perm[k] = j;
            sign[k] = col[j].signum() as i32;
        }
        let mut samples = vec![SymMat::zeros(d); self.samples.len()];
        for (idx, s) in self.samples.iter().enumerate() {
            let src = multi_index(idx, d, n);
            let mut dst = vec![0; d];
            for k in 0..d {
                // Mirrored cells go to n−2−i rather than n−1−i: the forward
                // difference leaving cell i then lands on the one leaving its image.
                dst[perm[k]] = if sign[k] > 0 { src[k] } else { (2 * n - 2 - src[k]) % n };
            }
            samples[linear_index(&dst, n)] = s.conjugate(q);
        }
        Self::new(d, n, samples)
    }
}

fn multi_index(mut idx: usize, dim: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; dim];
    for k in (0..dim).rev() {
        out[k] = idx % n;
        idx /= n;
    }
    out
}

fn linear_index(ix: &[usize], n: usize) -> usize {
    ix.iter().fold(0, |acc, &i| acc * n + i)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target ‖r‖/‖b‖.
    pub tol: f64,
    pub max_iter: usize,
    pub delta0: f64,
    /// Number of δ levels, δ_k = δ0·4^{-k}.
    pub levels: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000, delta0: 0.1, levels: 6 }
    }
}

impl SolverConfig {
    pub fn deltas(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.delta0 * 0.25f64.powi(k as i32)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub delta: f64,
    pub direction: Vector,
    /// Dv per cell.
    pub corrector_grad: Vec<Vector>,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    corrector: Vec<f64>,
}

impl CellSolution {
    /// Cell-centered corrector values, mean zero.
    pub fn corrector(&self) -> &[f64] {
        &self.corrector
    }

    /// Mean of |Dv|² over the cell.
    pub fn corrector_grad_sq_mean(&self) -> f64 {
        self.corrector_grad.iter().map(|g| g.dot(g)).sum::<f64>() / self.corrector_grad.len() as f64
    }
}

/// Periodic grid operators shared by one solve.
struct Grid<'a> {
    coeff: &'a PeriodicCoefficient,
    delta: f64,
    strides: Vec<usize>,
    h_inv: f64,
}

impl<'a> Grid<'a> {
    fn new(coeff: &'a PeriodicCoefficient, delta: f64) -> Self {
        let (d, n) = (coeff.dim, coeff.n_grid);
        let strides = (0..d).map(|k| n.pow((d - 1 - k) as u32)).collect();
        Self { coeff, delta, strides, h_inv: n as f64 }
    }

    fn next(&self, idx: usize, k: usize) -> usize {
        let s = self.strides[k];
        let n = self.coeff.n_grid;
        if (idx / s) % n == n - 1 {
            idx + s - n * s
        } else {
            idx + s
        }
    }

    fn grad(&self, v: &[f64], idx: usize) -> Vector {
        let d = self.coeff.dim;
        let mut g = [0.0; 3];
        for (k, gk) in g.iter_mut().enumerate().take(d) {
            *gk = (v[self.next(idx, k)] - v[idx]) * self.h_inv;
        }
        Vector::from_array(d, g)
    }

    fn flux(&self, idx: usize, g: &Vector) -> Vector {
        self.coeff.samples[idx].mul_vec(g) + *g * self.delta
    }

    /// out = Dᵀ A_δ (λ + Dv); pass λ = 0 for the plain operator.
    fn apply(&self, v: &[f64], lambda: &Vector, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let d = self.coeff.dim;
        for idx in 0..v.len() {
            let g = self.grad(v, idx) + *lambda;
            let q = self.flux(idx, &g);
            for k in 0..d {
                let qk = q[k] * self.h_inv;
                out[idx] -= qk;
                out[self.next(idx, k)] += qk;
            }
        }
    }
}

/// FFT inverse of DᵀA_ref D on mean-zero grid functions.
struct Preconditioner {
    dim: usize,
    n: usize,
    inv_symbol: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Preconditioner {
    fn new(dim: usize, n: usize, a_ref: &SymMat) -> Self {
        let h_inv = n as f64;
        let s: Vec<Complex64> = (0..n)
            .map(|m| (Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / n as f64) - 1.0) * h_inv)
            .collect();
        let total = n.pow(dim as u32);
        let inv_symbol = (0..total)
            .map(|idx| {
                let mi = multi_index(idx, dim, n);
                let mut sym = 0.0;
                for k in 0..dim {
                    for l in 0..dim {
                        sym += a_ref.get(k, l) * (s[mi[k]].conj() * s[mi[l]]).re;
                    }
                }
                if idx == 0 || sym <= 0.0 {
                    0.0
                } else {
                    1.0 / sym
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        Self { dim, n, inv_symbol, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn apply(&self, r: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(r.iter().map(|&x| Complex64::new(x, 0.0)));
        fft_nd(buf, self.dim, self.n, self.fwd.as_ref());
        for (b, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *b *= *s;
        }
        fft_nd(buf, self.dim, self.n, self.inv.as_ref());
        let scale = 1.0 / buf.len() as f64;
        for (o, b) in out.iter_mut().zip(buf.iter()) {
            *o = b.re * scale;
        }
    }
}

/// Unnormalized d-dimensional transform along every axis.
fn fft_nd(data: &mut [Complex64], dim: usize, n: usize, plan: &dyn Fft<f64>) {
    let total = data.len();
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            continue;
        }
        for outer in 0..total / (stride * n) {
            for inner in 0..stride {
                let base = outer * stride * n + inner;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[base + j * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, l) in line.iter().enumerate() {
                    data[base + j * stride] = *l;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_direction(coeff: &PeriodicCoefficient, direction: &Vector) -> Result<(), CellError> {
    if direction.dim() != coeff.dim {
        return Err(CellError::Argument("direction dimension does not match the coefficient".into()));
    }
    if (direction.norm() - 1.0).abs() > 1e-12 {
        return Err(CellError::Argument(format!("direction must be a unit vector (norm {})", direction.norm())));
    }
    Ok(())
}

/// Minimizes the discrete δ-regularized cell energy for the macroscopic
/// gradient `direction`.
pub fn solve_cell_problem(
    coeff: &PeriodicCoefficient,
    delta: f64,
    direction: &Vector,
    cfg: &SolverConfig,
) -> Result<CellSolution, CellError> {
    solve_warm(coeff, delta, direction, cfg, None)
}

fn solve_warm(
    coeff: &PeriodicCoefficient,
    delta: f64,
    direction: &Vector,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<CellSolution, CellError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(CellError::Argument(format!("delta must be positive, got {delta}")));
    }
    check_direction(coeff, direction)?;
    let grid = Grid::new(coeff, delta);
    let total = coeff.len();
    let zero = Vector::zeros(coeff.dim);

    let mut b = vec![0.0; total];
    grid.apply(&vec![0.0; total], direction, &mut b);
    b.iter_mut().for_each(|x| *x = -*x);
    let b_norm = dot(&b, &b).sqrt();

    let mut x = match start {
        Some(s) => s.to_vec(),
        None => vec![0.0; total],
    };
    let mut residual = 0.0;
    let mut iterations = 0;
    if b_norm > 0.0 {
        let pre = Preconditioner::new(coeff.dim, coeff.n_grid, &(coeff.mean() + SymMat::scalar(coeff.dim, delta)));
        let mut buf = Vec::with_capacity(total);
        let mut r = vec![0.0; total];
        grid.apply(&x, &zero, &mut r);
        for (ri, bi) in r.iter_mut().zip(&b) {
            *ri = bi - *ri;
        }
        let mut z = vec![0.0; total];
        pre.apply(&r, &mut z, &mut buf);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; total];
        loop {
            residual = dot(&r, &r).sqrt() / b_norm;
            if residual <= cfg.tol {
                break;
            }
            if iterations >= cfg.max_iter {
                return Err(CellError::NonConvergence { iterations, residual });
            }
            grid.apply(&p, &zero, &mut q);
            let alpha = rz / dot(&p, &q);
            for i in 0..total {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            pre.apply(&r, &mut z, &mut buf);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..total {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
    }
    let mean = x.iter().sum::<f64>() / total as f64;
    x.iter_mut().for_each(|v| *v -= mean);

    let corrector_grad: Vec<Vector> = (0..total).map(|i| grid.grad(&x, i)).collect();
    let energy = energy_of_field(coeff, delta, direction, &corrector_grad)?;
    Ok(CellSolution { delta, direction: *direction, corrector_grad, energy, residual, iterations, corrector: x })
}

/// Mean over cells of A_δ(λ + ∇v)·(λ + ∇v) for given corrector gradient
/// samples. `delta` may be zero.
pub fn energy_of_field(
    coeff: &PeriodicCoefficient,
    delta: f64,
    direction: &Vector,
    corrector_grad: &[Vector],
) -> Result<f64, CellError> {
    if corrector_grad.len() != coeff.len() {
        return Err(CellError::Shape { expected: coeff.len(), found: corrector_grad.len() });
    }
    if direction.dim() != coeff.dim || corrector_grad.iter().any(|g| g.dim() != coeff.dim) {
        return Err(CellError::Argument("dimension mismatch".into()));
    }
    let sum: f64 = coeff
        .samples
        .iter()
        .zip(corrector_grad)
        .map(|(a, g)| {
            let x = *direction + *g;
            a.quad(&x) + delta * x.dot(&x)
        })
        .sum();
    Ok(sum / coeff.len() as f64)
}

/// The energy of the zero corrector, an upper bound for the cell energy.
pub fn plug_in_energy(coeff: &PeriodicCoefficient, delta: f64, direction: &Vector) -> f64 {
    let zeros = vec![Vector::zeros(coeff.dim); coeff.len()];
    energy_of_field(coeff, delta, direction, &zeros).expect("shapes agree")
}

#[derive(Clone, Debug)]
pub struct ExtrapolationResult {
    /// Decreasing.
    pub deltas: Vec<f64>,
    /// A*_δ for each δ.
    pub tensors: Vec<SymMat>,
    /// A* at δ = 0.
    pub estimate: SymMat,
    /// Deviation of the third-smallest-δ tensor from the fitted line,
    /// relative to max(1, ‖A*_δ‖max) at the smallest δ.
    pub fit_residual: f64,
    /// False when some A*_δ − A*_δ' (δ > δ') fails to be PSD by more than 1e-8.
    pub monotone: bool,
    /// True when the fit was abandoned and `estimate` is the smallest-δ tensor.
    pub stalled: bool,
    /// Largest negative eigenvalue magnitude removed when projecting onto
    /// the PSD cone.
    pub psd_projection: f64,
    pub max_residual: f64,
    pub iterations: usize,
}

fn directions(dim: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..dim).map(|i| (i, i)).collect();
    for i in 0..dim {
        for j in i + 1..dim {
            out.push((i, j));
        }
    }
    out
}

fn unit_direction(dim: usize, (i, j): (usize, usize)) -> Vector {
    if i == j {
        Vector::basis(dim, i)
    } else {
        (Vector::basis(dim, i) + Vector::basis(dim, j)) * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// A*_δ for every δ of the schedule, extrapolated linearly to δ = 0 through
/// the two smallest values.
pub fn homogenize_general(coeff: &PeriodicCoefficient, cfg: &SolverConfig) -> Result<ExtrapolationResult, CellError> {
    let d = coeff.dim;
    let deltas = cfg.deltas();
    if deltas.len() < 2 {
        return Err(CellError::Argument("at least two δ levels are required".into()));
    }
    let dirs = directions(d);
    // One warm-started sweep over δ per direction.
    let sweeps: Vec<Vec<(f64, f64, usize)>> = dirs
        .par_iter()
        .map(|&ij| {
            let lam = unit_direction(d, ij);
            let mut start: Option<Vec<f64>> = None;
            let mut out = Vec::with_capacity(deltas.len());
            for &delta in &deltas {
                let sol = solve_warm(coeff, delta, &lam, cfg, start.as_deref())?;
                out.push((sol.energy, sol.residual, sol.iterations));
                start = Some(sol.corrector);
            }
            Ok(out)
        })
        .collect::<Result<_, CellError>>()?;

    let mut tensors = Vec::with_capacity(deltas.len());
    for k in 0..deltas.len() {
        let mut rows = vec![vec![0.0; d]; d];
        for (pos, &(i, j)) in dirs.iter().enumerate() {
            if i == j {
                rows[i][i] = sweeps[pos][k].0;
            }
        }
        for (pos, &(i, j)) in dirs.iter().enumerate() {
            if i != j {
                let v = sweeps[pos][k].0 - 0.5 * (rows[i][i] + rows[j][j]);
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        tensors.push(SymMat::from_rows(&rows)?);
    }
    let max_residual = sweeps.iter().flatten().map(|s| s.1).fold(0.0, f64::max);
    let iterations = sweeps.iter().flatten().map(|s| s.2).sum();

    let monotone = tensors.windows(2).all(|w| {
        let diff = w[0] - w[1];
        sym_eig(&diff).min() >= -1e-8 * w[0].max_abs().max(1.0)
    });

    let kk = deltas.len() - 1;
    let (a_last, a_prev) = (tensors[kk], tensors[kk - 1]);
    let (d_last, d_prev) = (deltas[kk], deltas[kk - 1]);
    let slope = (a_prev - a_last) * (1.0 / (d_prev - d_last));
    let mut estimate = a_last - slope * d_last;

    let scale = a_last.max_abs().max(1.0);
    let fit_residual = if kk >= 2 {
        let predicted = a_last + slope * (deltas[kk - 2] - d_last);
        (predicted - tensors[kk - 2]).max_abs() / scale
    } else {
        0.0
    };

    let mut stalled = (0..d).any(|i| estimate.get(i, i) < -1e-8 * scale);
    if kk >= 2 {
        let slope_before = (tensors[kk - 2] - a_prev) * (1.0 / (deltas[kk - 2] - d_prev));
        stalled |= (0..d).any(|i| {
            let (s_new, s_old) = (slope.get(i, i), slope_before.get(i, i));
            s_new.abs() > 1e3 * s_old.abs().max(1e-300)
        });
    }
    if stalled {
        estimate = a_last;
    }

    let mut eig = sym_eig(&estimate);
    let psd_projection = (-eig.min()).max(0.0);
    if psd_projection > 0.0 {
        for k in 0..d {
            let lam = eig.eigenvalues[k].max(0.0);
            let mut vals = eig.eigenvalues.to_vec();
            vals[k] = lam;
            eig.eigenvalues = Vector::new(&vals)?;
        }
        estimate = eig.reconstruct();
    }

    Ok(ExtrapolationResult {
        deltas,
        tensors,
        estimate,
        fit_residual,
        monotone,
        stalled,
        psd_projection,
        max_residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminate::homogenize_laminate;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn counter_example(n: usize) -> PeriodicCoefficient {
        let spec = LaminateSpec::along_e1(SymMat::outer(&Vector::basis(2, 1)), SymMat::identity(2), 0.5).unwrap();
        PeriodicCoefficient::from_laminate(&spec, n).unwrap()
    }

    fn checkerboard(n: usize, alpha: f64, beta: f64) -> PeriodicCoefficient {
        PeriodicCoefficient::from_fn(2, n, |y| {
            let white = (y[0] < 0.5) == (y[1] < 0.5);
            SymMat::scalar(2, if white { alpha } else { beta })
        })
        .unwrap()
    }

    #[test]
    fn checkerboard_approaches_geometric_mean() {
        let (alpha, beta) = (1.0, 4.0);
        let s = solve_cell_problem(&checkerboard(128, alpha, beta), 1e-6, &Vector::basis(2, 0), &cfg()).unwrap();
        let exact = (alpha * beta as f64).sqrt();
        assert!((s.energy - exact).abs() < 0.02 * exact, "{}", s.energy);
    }

    #[test]
    fn constant_coefficient_has_zero_corrector() {
        let c = PeriodicCoefficient::constant(2, 8, SymMat::identity(2)).unwrap();
        let s = solve_cell_problem(&c, 0.3, &Vector::basis(2, 0), &cfg()).unwrap();
        assert!((s.energy - 1.3).abs() < 1e-14);
        assert!(s.corrector_grad.iter().all(|g| g.norm() == 0.0));
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn laminate_energy_matches_lamination_formula() {
        let delta = 1e-3;
        let s = solve_cell_problem(&counter_example(256), delta, &Vector::basis(2, 0), &cfg()).unwrap();
        // harmonic mean of the e1e1 entries δ and 1+δ
        let exact = 1.0 / (0.5 / delta + 0.5 / (1.0 + delta));
        assert!((s.energy - exact).abs() <= 1e-4 * exact, "{} vs {exact}", s.energy);
        let mean: f64 = s.corrector_grad.iter().map(|g| g[0]).sum::<f64>() / s.corrector_grad.len() as f64;
        assert!(mean.abs() < 1e-8);
    }

    #[test]
    fn plug_in_energy_examples() {
        let c = PeriodicCoefficient::constant(2, 4, SymMat::identity(2)).unwrap();
        assert_eq!(plug_in_energy(&c, 0.0, &Vector::basis(2, 0)), 1.0);
        let lam = counter_example(16);
        assert!((plug_in_energy(&lam, 0.0, &Vector::basis(2, 0)) - 0.5).abs() < 1e-15);
        let s = solve_cell_problem(&lam, 1e-3, &Vector::basis(2, 0), &cfg()).unwrap();
        assert!(s.energy < 0.5 + 1e-3);
    }

    #[test]
    fn energy_of_field_reproduces_solver_energy() {
        let c = PeriodicCoefficient::from_fn(2, 16, |y| {
            SymMat::from_rows(&[[1.0 + y[0], 0.3 * y[1]], [0.3 * y[1], 2.0 - y[0] * y[1]]]).unwrap()
        })
        .unwrap();
        let lam = Vector::new(&[0.6, 0.8]).unwrap();
        let s = solve_cell_problem(&c, 0.01, &lam, &cfg()).unwrap();
        let e = energy_of_field(&c, 0.01, &lam, &s.corrector_grad).unwrap();
        assert_eq!(e, s.energy);
        assert!(energy_of_field(&c, 0.01, &lam, &s.corrector_grad[1..]).is_err());
    }

    #[test]
    fn homogenize_constant() {
        let m = SymMat::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let c = PeriodicCoefficient::constant(2, 8, m).unwrap();
        let r = homogenize_general(&c, &cfg()).unwrap();
        assert!((r.estimate - m).max_abs() < 1e-8);
        assert!(r.monotone && !r.stalled);
    }

    #[test]
    fn homogenize_counter_example() {
        let r = homogenize_general(&counter_example(64), &cfg()).unwrap();
        assert!(r.estimate.get(0, 0).abs() <= 1e-3);
        assert!((r.estimate.get(1, 1) - 1.0).abs() <= 1e-6);
        assert!(r.monotone);
    }

    #[test]
    fn homogenize_matches_formula_on_tilted_phases() {
        let xi = Vector::new(&[1.0, 1.0]).unwrap();
        let spec = LaminateSpec::along_e1(SymMat::outer(&xi), SymMat::identity(2), 0.5).unwrap();
        let r = homogenize_general(&PeriodicCoefficient::from_laminate(&spec, 64).unwrap(), &cfg()).unwrap();
        let exact = homogenize_laminate(&spec, spec.default_a_tol()).tensor;
        assert!((r.estimate - exact).max_abs() <= 1e-3 * exact.max_abs());
    }

    #[test]
    fn text_round_trip() {
        let c = counter_example(4);
        let back = PeriodicCoefficient::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert!(PeriodicCoefficient::from_text("2 4 2\n1 2").is_err());
        assert!(PeriodicCoefficient::from_text("2 4 3\n1 0 1").is_err());
        assert!(PeriodicCoefficient::from_text("").is_err());
    }

    #[test]
    fn coefficient_validation() {
        let bad = SymMat::diag(&[-1.0, 1.0]).unwrap();
        assert!(PeriodicCoefficient::constant(2, 4, bad).is_err());
        assert!(PeriodicCoefficient::constant(2, 6, SymMat::identity(2)).is_err());
        assert!(PeriodicCoefficient::constant(2, 2, SymMat::identity(2)).is_err());
        let c = counter_example(4);
        assert!(solve_cell_problem(&c, 0.0, &Vector::basis(2, 0), &cfg()).is_err());
        assert!(solve_cell_problem(&c, 0.1, &Vector::new(&[1.0, 1.0]).unwrap(), &cfg()).is_err());
        let tilted = LaminateSpec::new(
            SymMat::identity(2),
            SymMat::identity(2),
            0.5,
            Vector::new(&[0.6, 0.8]).unwrap(),
        )
        .unwrap();
        assert!(PeriodicCoefficient::from_laminate(&tilted, 8).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let c = checkerboard(32, 1.0, 10.0);
        let tight = SolverConfig { tol: 1e-14, max_iter: 1, ..cfg() };
        match solve_cell_problem(&c, 1e-3, &Vector::basis(2, 0), &tight) {
            Err(CellError::NonConvergence { iterations: 1, residual }) => assert!(residual > 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }
}
