//! The two-dimensional example with a nonlocal Γ-limit.
//!
//! On Ω = (0,1)² the energy is ∫ a(x2/ε)(∂1u)² + u², with a(y2) = 1 on the
//! fraction θ of the period and a(y2) = c on the rest. It has no control on
//! ∂2u. The limit is
//!
//! F(u) = ∫dx2 ∫ |F₂u(λ, x2)|² / k̂0(λ) dλ, where
//! k̂0(λ) = θ/(4π²λ²+1) + (1−θ)/(4π²cλ²+1).
//!
//! Equivalently F(u) = ∫dx2 ∫ (c/c_θ)(∂1u)² + (√α u + h ∗₁ u)², with
//! F₂h = √(α+f) − √α.
//!
//! Rows of sampled fields are functions of x1 on [0,1] extended by zero.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnomalousError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid frequency grid: {0}")]
    Grid(String),
    #[error("grid too small: kernel tail ratio {ratio:e} exceeds 1e-4")]
    TailBound { ratio: f64 },
    #[error("invalid field: {0}")]
    Field(String),
    #[error("incompatible grids: {0}")]
    Incompatible(String),
    #[error("u is not admissible at this resolution (high-mode fraction of b {tail:e})")]
    Inadmissible { tail: f64 },
    #[error("Sturm–Liouville routes disagree by {discrepancy:e}")]
    SlMismatch { discrepancy: f64 },
    #[error("mean identity violated by {deviation:e}")]
    MeanIdentity { deviation: f64 },
    #[error("resolution too coarse: {0}")]
    Resolution(String),
}

type Result<T> = std::result::Result<T, AnomalousError>;

/// Period of the zero padding used by every whole-line transform.
pub const PAD_PERIOD: usize = 64;

/// Alias images summed on each side in the Fourier-form weights.
const ALIAS_TERMS: i64 = 64;

const TAIL_TOL: f64 = 1e-4;
const SL_TOL: f64 = 1e-5;
const MEAN_TOL: f64 = 1e-4;
const ADMISSIBLE_TOL: f64 = 1e-2;

fn four_pi2() -> f64 {
    4.0 * PI * PI
}

/// The constants of the example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    c: f64,
    theta: f64,
    c_theta: f64,
    alpha: f64,
}

impl SpectralParams {
    /// `c ≥ 1` (the example itself needs c > 1; c = 1 is the homogeneous
    /// reference case) and `0 < θ < 1`.
    pub fn new(c: f64, theta: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 1.0) {
            return Err(AnomalousError::Params(format!("c must be ≥ 1, got {c}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(AnomalousError::Params(format!("theta must lie in (0, 1), got {theta}")));
        }
        let c_theta = c * theta + 1.0 - theta;
        let alpha = (c * c * theta + 1.0 - theta) / (c_theta * c_theta);
        Ok(Self { c, theta, c_theta, alpha })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn c_theta(&self) -> f64 {
        self.c_theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// k̂0 as the average over the period of 1/(4π²a λ² + 1).
    pub fn k0_hat(&self, lambda: f64) -> f64 {
        let s = four_pi2() * lambda * lambda;
        self.theta / (s + 1.0) + (1.0 - self.theta) / (self.c * s + 1.0)
    }

    /// k̂0 as the single rational function (c_θ s + 1)/((s + 1)(cs + 1)).
    pub fn k0_hat_closed(&self, lambda: f64) -> f64 {
        let s = four_pi2() * lambda * lambda;
        (self.c_theta * s + 1.0) / ((s + 1.0) * (self.c * s + 1.0))
    }

    pub fn f(&self, lambda: f64) -> f64 {
        let (c, t, ct) = (self.c, self.theta, self.c_theta);
        (c - 1.0) * (c - 1.0) * t * (t - 1.0) / (ct * ct) / (ct * four_pi2() * lambda * lambda + 1.0)
    }

    /// (c/c_θ)4π²λ² + α + f(λ), which equals 1/k̂0(λ).
    pub fn inv_k0_decomposed(&self, lambda: f64) -> f64 {
        self.c / self.c_theta * four_pi2() * lambda * lambda + self.alpha + self.f(lambda)
    }

    /// F₂h(λ) = √(α+f) − √α, written without cancellation.
    pub fn h_hat(&self, lambda: f64) -> f64 {
        let f = self.f(lambda);
        f / ((self.alpha + f).sqrt() + self.alpha.sqrt())
    }
}

pub fn k0_hat(params: &SpectralParams, lambda1: f64) -> f64 {
    params.k0_hat(lambda1)
}

pub fn alpha_f(params: &SpectralParams, lambda1: f64) -> (f64, f64) {
    (params.alpha, params.f(lambda1))
}

/// Truncated, uniformly sampled frequency axis [−λmax, λmax).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    lambda_max: f64,
    n_freq: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self { lambda_max: 64.0, n_freq: 8192 }
    }
}

impl FrequencyGrid {
    pub fn new(lambda_max: f64, n_freq: usize) -> Result<Self> {
        if !n_freq.is_power_of_two() || n_freq < 2 {
            return Err(AnomalousError::Grid(format!("n_freq must be a power of two, got {n_freq}")));
        }
        if !(lambda_max.is_finite() && lambda_max >= 32.0) {
            return Err(AnomalousError::Grid(format!("lambda_max must be ≥ 32, got {lambda_max}")));
        }
        Ok(Self { lambda_max, n_freq })
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.lambda_max / self.n_freq as f64
    }

    /// Ascending frequencies (j − n/2)·spacing.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_freq as i64;
        (0..n).map(|j| (j - n / 2) as f64 * self.spacing()).collect()
    }

    /// Spatial step of the matching inverse transform.
    pub fn dx(&self) -> f64 {
        1.0 / (2.0 * self.lambda_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Nodes include both interval ends; end weights are halved.
    Trapezoid,
    /// Equal weights (cell midpoints, or a full period).
    Midpoint,
}

/// Uniform sampling axis: coordinates start + i·step, i < len.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
    pub rule: Quadrature,
}

impl Axis {
    /// `n` nodes on [0, 1] including both ends.
    pub fn unit_nodes(n: usize) -> Self {
        Self { start: 0.0, step: 1.0 / (n - 1) as f64, len: n, rule: Quadrature::Trapezoid }
    }

    /// Midpoints of `n` equal cells of [0, 1].
    pub fn unit_midpoints(n: usize) -> Self {
        Self { start: 0.5 / n as f64, step: 1.0 / n as f64, len: n, rule: Quadrature::Midpoint }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn weight(&self, i: usize) -> f64 {
        match self.rule {
            Quadrature::Trapezoid if i == 0 || i + 1 == self.len => 0.5 * self.step,
            _ => self.step,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    fn is_unit_nodes(&self) -> bool {
        self.rule == Quadrature::Trapezoid
            && self.start.abs() < 1e-12
            && (self.coord(self.len - 1) - 1.0).abs() < 1e-9
    }
}

/// A real function sampled on a uniform grid, of x1 alone or of (x1, x2).
/// Values are stored row by row (x1 fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    values: Vec<f64>,
    x1: Axis,
    x2: Option<Axis>,
    zero_extended: bool,
}

impl SampledField {
    pub fn new(values: Vec<f64>, x1: Axis, x2: Option<Axis>, zero_extended: bool) -> Result<Self> {
        if x1.len < 16 {
            return Err(AnomalousError::Field(format!("need at least 16 points in x1, got {}", x1.len)));
        }
        let rows = x2.map_or(1, |a| a.len);
        if rows == 0 || values.len() != x1.len * rows {
            return Err(AnomalousError::Field(format!(
                "expected {} values, found {}",
                x1.len * rows,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AnomalousError::Field("non-finite value".into()));
        }
        Ok(Self { values, x1, x2, zero_extended })
    }

    /// `f` on `n` nodes of [0, 1], zero-extended in x1.
    pub fn from_fn_1d(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let x1 = Axis::unit_nodes(n);
        Self::new(x1.coords().into_iter().map(f).collect(), x1, None, true)
    }

    /// `f` on `n1` nodes of [0, 1] in x1 times `n2` cell midpoints in x2.
    pub fn from_fn_2d(n1: usize, n2: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let x1 = Axis::unit_nodes(n1);
        let x2 = Axis::unit_midpoints(n2);
        let mut values = Vec::with_capacity(n1 * n2);
        for j in 0..n2 {
            for i in 0..n1 {
                values.push(f(x1.coord(i), x2.coord(j)));
            }
        }
        Self::new(values, x1, Some(x2), true)
    }

    /// A CSV grid: one line per x2 row (cell midpoints), one column per x1
    /// node on [0, 1]. A single line is a function of x1 alone.
    pub fn from_csv_grid(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|_| AnomalousError::Field(format!("bad value {t:?}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n1 = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n1) {
            return Err(AnomalousError::Field("rows have different lengths".into()));
        }
        let n2 = rows.len();
        let x2 = (n2 > 1).then(|| Axis::unit_midpoints(n2));
        Self::new(rows.into_iter().flatten().collect(), Axis::unit_nodes(n1.max(2)), x2, true)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x1(&self) -> &Axis {
        &self.x1
    }

    pub fn x2(&self) -> Option<&Axis> {
        self.x2.as_ref()
    }

    pub fn zero_extended(&self) -> bool {
        self.zero_extended
    }

    pub fn n1(&self) -> usize {
        self.x1.len
    }

    pub fn n_rows(&self) -> usize {
        self.x2.map_or(1, |a| a.len)
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.x1.len..(j + 1) * self.x1.len]
    }

    /// Quadrature weight of row `j` in x2 (1 for a function of x1 alone).
    pub fn row_weight(&self, j: usize) -> f64 {
        self.x2.map_or(1.0, |a| a.weight(j))
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.x1, self.x2, self.zero_extended)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Quadrature of the squared field.
    pub fn l2_sq(&self) -> f64 {
        (0..self.n_rows())
            .map(|j| {
                let w2 = self.row_weight(j);
                self.row(j).iter().enumerate().map(|(i, v)| self.x1.weight(i) * v * v).sum::<f64>() * w2
            })
            .sum()
    }

    fn require_unit_rows(&self) -> Result<()> {
        if !self.zero_extended || !self.x1.is_unit_nodes() {
            return Err(AnomalousError::Field(
                "rows must be zero-extended samples on nodes spanning [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn interp_row(&self, j: usize, x1: f64) -> f64 {
        let t = (x1 - self.x1.start) / self.x1.step;
        if t <= 0.0 || t >= (self.x1.len - 1) as f64 {
            if !self.zero_extended {
                let i = if t <= 0.0 { 0 } else { self.x1.len - 1 };
                return self.row(j)[i];
            }
            if t == 0.0 {
                return self.row(j)[0];
            }
            if t == (self.x1.len - 1) as f64 {
                return self.row(j)[self.x1.len - 1];
            }
            return 0.0;
        }
        let i = t.floor() as usize;
        let w = t - i as f64;
        let r = self.row(j);
        (1.0 - w) * r[i] + w * r[i + 1]
    }
}

/// Anything that can be evaluated at a point of Ω.
pub trait Profile: Sync {
    fn eval(&self, x1: f64, x2: f64) -> f64;
    /// True when the value does not depend on x2.
    fn x2_independent(&self) -> bool;
}

impl Profile for SampledField {
    /// Bilinear interpolation; constant continuation beyond the x2 range.
    fn eval(&self, x1: f64, x2: f64) -> f64 {
        let Some(a) = self.x2 else {
            return self.interp_row(0, x1);
        };
        let t = ((x2 - a.start) / a.step).clamp(0.0, (a.len - 1) as f64);
        let j = (t.floor() as usize).min(a.len.saturating_sub(2));
        if a.len == 1 {
            return self.interp_row(0, x1);
        }
        let w = t - j as f64;
        (1.0 - w) * self.interp_row(j, x1) + w * self.interp_row(j + 1, x1)
    }

    fn x2_independent(&self) -> bool {
        self.n_rows() == 1
    }
}

/// Smooth bump supported in [0, 1] with peak value 1 at t = ½.
pub fn bump(t: f64) -> f64 {
    let s = 2.0 * t - 1.0;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Named test functions, all in H¹₀ in x1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    /// sin(kπx1)
    Sin(u32),
    /// bump(x1)
    Bump,
    /// bump(x1)·bump(x2)
    BumpProduct,
    /// sin(kπx1)·bump(x2)
    SinBump(u32),
}

impl TestFunction {
    pub fn sample_1d(&self, n: usize) -> Result<SampledField> {
        if !self.x2_independent() {
            return Err(AnomalousError::Field(format!("{self} depends on x2")));
        }
        SampledField::from_fn_1d(n, |x| self.eval(x, 0.5))
    }

    pub fn sample(&self, n1: usize, n2: usize) -> Result<SampledField> {
        SampledField::from_fn_2d(n1, n2, |x1, x2| self.eval(x1, x2))
    }
}

impl Profile for TestFunction {
    fn eval(&self, x1: f64, x2: f64) -> f64 {
        if !(0.0..=1.0).contains(&x1) {
            return 0.0;
        }
        match *self {
            TestFunction::Sin(k) => (k as f64 * PI * x1).sin(),
            TestFunction::Bump => bump(x1),
            TestFunction::BumpProduct => bump(x1) * bump(x2),
            TestFunction::SinBump(k) => (k as f64 * PI * x1).sin() * bump(x2),
        }
    }

    fn x2_independent(&self) -> bool {
        matches!(self, TestFunction::Sin(_) | TestFunction::Bump)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Sin(k) => write!(f, "sin_{k}"),
            TestFunction::Bump => write!(f, "bump"),
            TestFunction::BumpProduct => write!(f, "bump_product"),
            TestFunction::SinBump(k) => write!(f, "sin_{k}_bump"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = AnomalousError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || AnomalousError::Field(format!("unknown test function {s:?}"));
        match s {
            "bump" => return Ok(TestFunction::Bump),
            "bump_product" => return Ok(TestFunction::BumpProduct),
            _ => {}
        }
        let rest = s.strip_prefix("sin_").ok_or_else(bad)?;
        let (k, with_bump) = match rest.strip_suffix("_bump") {
            Some(k) => (k, true),
            None => (rest, false),
        };
        let k: u32 = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(if with_bump { TestFunction::SinBump(k) } else { TestFunction::Sin(k) })
    }
}

fn tail_check(params: &SpectralParams, grid: &FrequencyGrid) -> Result<f64> {
    let h0 = params.h_hat(0.0).abs();
    let ratio = if h0 == 0.0 { 0.0 } else { params.h_hat(grid.lambda_max).abs() / h0 };
    if ratio > TAIL_TOL {
        return Err(AnomalousError::TailBound { ratio });
    }
    Ok(ratio)
}

/// F₂h at the grid frequencies, ascending.
pub fn h_spectrum(params: &SpectralParams, grid: &FrequencyGrid) -> Vec<f64> {
    grid.frequencies().into_iter().map(|l| params.h_hat(l)).collect()
}

/// h = F₂⁻¹[F₂h] sampled at spacing 1/(period·samples_per_unit) over one
/// period 1/spacing of the frequency grid, in circular order (x = 0 first).
/// `len` must be a multiple of n_freq.
fn h_circular(params: &SpectralParams, grid: &FrequencyGrid, len: usize, plan: &dyn Fft<f64>) -> Vec<f64> {
    let n = grid.n_freq as i64;
    let dl = grid.spacing();
    let mut spec = vec![Complex64::default(); len];
    let (lo, hi) = if len as i64 == n { (-n / 2, n / 2 - 1) } else { (-n / 2, n / 2) };
    for m in lo..=hi {
        let idx = m.rem_euclid(len as i64) as usize;
        spec[idx] = Complex64::new(params.h_hat(m as f64 * dl) * dl, 0.0);
    }
    plan.process(&mut spec);
    spec.into_iter().map(|z| z.re).collect()
}

/// The convolution kernel h on the spatial grid dual to `grid`
/// (step 1/(2λmax), x from −P/2 to P/2 with P = 1/spacing).
///
/// Fails when |F₂h(λmax)| > 1e-4·|F₂h(0)|, i.e. the truncation would cut
/// off a visible part of the spectrum.
pub fn h_kernel(params: &SpectralParams, grid: &FrequencyGrid) -> Result<SampledField> {
    tail_check(params, grid)?;
    let n = grid.n_freq;
    let plan = FftPlanner::new().plan_fft_inverse(n);
    let circ = h_circular(params, grid, n, plan.as_ref());
    let mut values = vec![0.0; n];
    for (j, v) in values.iter_mut().enumerate() {
        *v = circ[(j + n / 2) % n];
    }
    let dx = grid.dx();
    let axis = Axis { start: -(n as f64 / 2.0) * dx, step: dx, len: n, rule: Quadrature::Midpoint };
    SampledField::new(values, axis, None, false)
}

/// Row transforms on a grid zero-padded to period [`PAD_PERIOD`].
struct Padded {
    n1: usize,
    dx: f64,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Padded {
    fn new(n1: usize) -> Self {
        let len = PAD_PERIOD * (n1 - 1);
        let mut planner = FftPlanner::new();
        Self {
            n1,
            dx: 1.0 / (n1 - 1) as f64,
            len,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    /// Signed frequency of bin m.
    fn lambda(&self, m: usize) -> f64 {
        let ms = if m <= self.len / 2 { m as f64 } else { m as f64 - self.len as f64 };
        ms / PAD_PERIOD as f64
    }

    /// dx·DFT of the zero-padded row, i.e. the transform of the samples at
    /// frequencies m/P.
    fn spectrum(&self, row: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.len];
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex64::new(v * self.dx, 0.0);
        }
        self.fwd.process(&mut buf);
        buf
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Weight W(λ) with ∫_ℝ |F₂u_I|²/k̂0 = ∫ over one period of |D(λ)|² W(λ),
/// where u_I is the piecewise-linear interpolant of the samples and D the
/// transform of the samples. F₂u_I = D·sinc²(πλdx), so W sums 1/k̂0·sinc⁴
/// over the alias images λ + j/dx. The polynomial part of 1/k̂0 sums in
/// closed form; only f needs the explicit image sum.
fn fourier_weights(params: &SpectralParams, pad: &Padded) -> Vec<f64> {
    let dx = pad.dx;
    let stiff = params.c / params.c_theta * 4.0 / (dx * dx);
    (0..pad.len)
        .into_par_iter()
        .map(|m| {
            let t = pad.lambda(m) * dx;
            let s = (PI * t).sin();
            let mut w = stiff * s * s + params.alpha * (2.0 + (2.0 * PI * t).cos()) / 3.0;
            for j in -ALIAS_TERMS..=ALIAS_TERMS {
                let tj = t + j as f64;
                let sc = sinc(PI * tj);
                w += params.f(tj / dx) * sc * sc * sc * sc;
            }
            w
        })
        .collect()
}

fn fourier_row(pad: &Padded, weights: &[f64], row: &[f64]) -> f64 {
    pad.spectrum(row).iter().zip(weights).map(|(d, w)| d.norm_sqr() * w).sum::<f64>() / PAD_PERIOD as f64
}

/// ∫dx2 ∫ |F₂u|²/k̂0 dλ.
///
/// Each row is read as the piecewise-linear interpolant of its samples,
/// extended by zero, whose transform is known exactly from the DFT of the
/// zero-padded row. The result is exact for that interpolant up to the
/// periodic rectangle rule in λ, which converges exponentially.
pub fn gamma_limit_fourier(params: &SpectralParams, u: &SampledField) -> Result<f64> {
    u.require_unit_rows()?;
    let pad = Padded::new(u.n1());
    let weights = fourier_weights(params, &pad);
    Ok((0..u.n_rows())
        .into_par_iter()
        .map(|j| u.row_weight(j) * fourier_row(&pad, &weights, u.row(j)))
        .collect::<Vec<f64>>()
        .iter()
        .sum())
}

/// Second-order x1-derivative on the nodes: centered inside, one-sided at
/// the ends.
fn derivative(row: &[f64], dx: f64) -> Vec<f64> {
    let n = row.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dx)
            } else if i == n - 1 {
                (3.0 * row[n - 1] - 4.0 * row[n - 2] + row[n - 3]) / (2.0 * dx)
            } else {
                (row[i + 1] - row[i - 1]) / (2.0 * dx)
            }
        })
        .collect()
}

/// Linear convolution (h ∗ u)(x_i) = Σ_j h(x_i − x_j)u_j dx on the padded
/// circle, given h in circular order on the same grid.
fn convolve(pad: &Padded, h_circ_hat: &[Complex64], row: &[f64]) -> Vec<f64> {
    let mut buf = pad.spectrum(row);
    for (b, h) in buf.iter_mut().zip(h_circ_hat) {
        *b *= *h;
    }
    pad.inv.process(&mut buf);
    let scale = 1.0 / pad.len as f64;
    buf.into_iter().map(|z| z.re * scale).collect()
}

/// Kernel samples on the padded grid of `u` and their DFT.
fn h_on_padded(params: &SpectralParams, grid: &FrequencyGrid, pad: &Padded) -> Result<(Vec<f64>, Vec<Complex64>)> {
    tail_check(params, grid)?;
    let period = 1.0 / grid.spacing();
    if (period - PAD_PERIOD as f64).abs() > 1e-9 {
        return Err(AnomalousError::Incompatible(format!(
            "frequency spacing must be 1/{PAD_PERIOD}, got {}",
            grid.spacing()
        )));
    }
    if pad.len < grid.n_freq {
        return Err(AnomalousError::Incompatible(format!(
            "λmax = {} exceeds the Nyquist frequency of the field grid",
            grid.lambda_max
        )));
    }
    let h = h_circular(params, grid, pad.len, pad.inv.as_ref());
    let mut hat: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    pad.fwd.process(&mut hat);
    Ok((h, hat))
}

/// ∫dx2 ∫ (c/c_θ)(∂1u)² + (√α u + h∗₁u)² dx1 with h from [`h_kernel`]'s
/// construction resampled on the field grid.
pub fn gamma_limit_convolution(params: &SpectralParams, u: &SampledField, grid: &FrequencyGrid) -> Result<f64> {
    u.require_unit_rows()?;
    let pad = Padded::new(u.n1());
    let (_, h_hat) = h_on_padded(params, grid, &pad)?;
    let (dx, sa) = (pad.dx, params.alpha.sqrt());
    let ratio = params.c / params.c_theta;
    Ok((0..u.n_rows())
        .into_par_iter()
        .map(|j| {
            let row = u.row(j);
            let du = derivative(row, dx);
            let grad: f64 = du.iter().enumerate().map(|(i, d)| u.x1.weight(i) * d * d).sum();
            let conv = convolve(&pad, &h_hat, row);
            // periodic trapezoid over the padded circle
            let mass: f64 = conv
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let v = if i < pad.n1 { row[i] } else { 0.0 };
                    let w = sa * v + g;
                    w * w
                })
                .sum::<f64>()
                * dx;
            u.row_weight(j) * (ratio * grad + mass)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum())
}

/// Discrete linear convolution of h (kernel of `h_kernel`'s construction) with
/// one field row, returned on the padded circle. Exposed for tests of the
/// convolution theorem.
pub fn convolve_row(params: &SpectralParams, grid: &FrequencyGrid, u: &SampledField, j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    u.require_unit_rows()?;
    let pad = Padded::new(u.n1());
    let (h, h_hat) = h_on_padded(params, grid, &pad)?;
    Ok((h, convolve(&pad, &h_hat, u.row(j))))
}

/// Sine transform of type I: S_k = Σ_{i=1}^{N−1} x_i sin(πik/N), k = 1..N−1,
/// for the N−1 interior values of a row with N intervals.
struct Dst {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst {
    fn new(intervals: usize) -> Self {
        Self { n: intervals, fft: FftPlanner::new().plan_fft_forward(2 * intervals) }
    }

    fn apply(&self, interior: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::default(); 2 * n];
        for (i, &v) in interior.iter().enumerate() {
            buf[i + 1] = Complex64::new(v, 0.0);
            buf[2 * n - i - 1] = Complex64::new(-v, 0.0);
        }
        self.fft.process(&mut buf);
        (1..n).map(|k| -0.5 * buf[k].im).collect()
    }

    fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let scale = 2.0 / self.n as f64;
        self.apply(coeffs).into_iter().map(|v| v * scale).collect()
    }

    /// Eigenvalue of −D² on the Dirichlet grid for mode k.
    fn symbol(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let s = (PI * k as f64 / (2.0 * n)).sin();
        4.0 * n * n * s * s
    }
}

/// k̂0 with 4π²λ² replaced by the symbol of the second difference.
fn k0_discrete(params: &SpectralParams, sigma: f64) -> f64 {
    params.theta / (sigma + 1.0) + (1.0 - params.theta) / (params.c * sigma + 1.0)
}

fn solve_b_row(params: &SpectralParams, dst: &Dst, row: &[f64]) -> Result<Vec<f64>> {
    let n = row.len() - 1;
    let mut coeffs = dst.apply(&row[1..n]);
    for (k, ck) in coeffs.iter_mut().enumerate() {
        *ck /= k0_discrete(params, dst.symbol(k + 1));
    }
    let total: f64 = coeffs.iter().map(|c| c * c).sum();
    let high: f64 = coeffs[3 * coeffs.len() / 4..].iter().map(|c| c * c).sum();
    let tail = if total > 0.0 { (high / total).sqrt() } else { 0.0 };
    if tail > ADMISSIBLE_TOL {
        return Err(AnomalousError::Inadmissible { tail });
    }
    let mut b = vec![0.0; n + 1];
    b[1..n].copy_from_slice(&dst.inverse(&coeffs));
    Ok(b)
}

/// b with F₂b = F₂u/k̂0, realized on (0,1) with homogeneous Dirichlet data.
///
/// The sine series of each row is divided by k̂0 evaluated at the
/// second-difference symbol of each mode, so the finite-difference
/// Sturm–Liouville solves of [`build_u0`] invert it exactly. Rows whose b
/// keeps more than 1% of its norm in the top quarter of the modes are
/// rejected. The whole-line inverse transform of F₂u/k̂0 is not supported
/// in [0,1]; see [`whole_line_b_leakage`].
pub fn solve_b(params: &SpectralParams, u: &SampledField) -> Result<SampledField> {
    u.require_unit_rows()?;
    let dst = Dst::new(u.n1() - 1);
    let rows: Vec<Vec<f64>> = (0..u.n_rows())
        .into_par_iter()
        .map(|j| solve_b_row(params, &dst, u.row(j)))
        .collect::<Result<_>>()?;
    u.with_values(rows.concat())
}

/// Fraction of ‖b‖ outside [0,1] when b is the whole-line inverse transform
/// of F₂u/k̂0, truncated to |λ| ≤ λmax.
pub fn whole_line_b_leakage(params: &SpectralParams, u: &SampledField, grid: &FrequencyGrid) -> Result<f64> {
    u.require_unit_rows()?;
    let pad = Padded::new(u.n1());
    let mut inside = 0.0;
    let mut outside = 0.0;
    for j in 0..u.n_rows() {
        let mut spec = pad.spectrum(u.row(j));
        for (m, z) in spec.iter_mut().enumerate() {
            let l = pad.lambda(m);
            *z = if l.abs() <= grid.lambda_max { *z / params.k0_hat(l) } else { Complex64::default() };
        }
        pad.inv.process(&mut spec);
        for (i, z) in spec.iter().enumerate() {
            let v = z.re / (pad.len as f64 * pad.dx);
            if i < pad.n1 {
                inside += v * v;
            } else {
                outside += v * v;
            }
        }
    }
    Ok((outside / (inside + outside)).sqrt())
}

fn check_a(a: f64) -> Result<()> {
    if !(a.is_finite() && a >= 1e-4) {
        return Err(AnomalousError::Params(format!("a must be ≥ 1e-4, got {a}")));
    }
    Ok(())
}

/// −a u″ + u = b on the nodes of [0,1], u(0) = u(1) = 0, by the second-order
/// three-point scheme (Thomas algorithm).
pub fn sl_fd(a: f64, b: &[f64]) -> Vec<f64> {
    let n = b.len() - 1;
    let h2 = 1.0 / (n * n) as f64;
    let off = -a / h2;
    let diag = 2.0 * a / h2 + 1.0;
    let m = n - 1;
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    for i in 0..m {
        let denom = if i == 0 { diag } else { diag - off * cp[i - 1] };
        cp[i] = off / denom;
        dp[i] = (b[i + 1] - if i == 0 { 0.0 } else { off * dp[i - 1] }) / denom;
    }
    let mut u = vec![0.0; n + 1];
    for i in (0..m).rev() {
        u[i + 1] = dp[i] - if i + 1 < m { cp[i] * u[i + 2] } else { 0.0 };
    }
    u
}

/// The Dirichlet Green kernel of −a∂² + 1 on (0,1):
/// sinh(min/√a)·sinh((1−max)/√a) / (√a·sinh(1/√a)).
pub fn green_kernel(a: f64, x: f64, s: f64) -> f64 {
    let k = 1.0 / a.sqrt();
    let (lo, hi) = if x < s { (x, s) } else { (s, x) };
    (k * lo).sinh() * (k * (1.0 - hi)).sinh() / (a.sqrt() * k.sinh())
}

/// u(x) = ∫ G(x, s) b(s) ds by cumulative trapezoid sums, O(n).
pub fn sl_green(a: f64, b: &[f64]) -> Vec<f64> {
    let n = b.len() - 1;
    let dx = 1.0 / n as f64;
    let k = 1.0 / a.sqrt();
    let x = |i: usize| i as f64 * dx;
    let left: Vec<f64> = (0..=n).map(|i| (k * x(i)).sinh() * b[i]).collect();
    let right: Vec<f64> = (0..=n).map(|i| (k * (1.0 - x(i))).sinh() * b[i]).collect();
    let mut i1 = vec![0.0; n + 1];
    for i in 1..=n {
        i1[i] = i1[i - 1] + 0.5 * dx * (left[i - 1] + left[i]);
    }
    let mut i2 = vec![0.0; n + 1];
    for i in (0..n).rev() {
        i2[i] = i2[i + 1] + 0.5 * dx * (right[i] + right[i + 1]);
    }
    let denom = a.sqrt() * k.sinh();
    (0..=n)
        .map(|i| ((k * (1.0 - x(i))).sinh() * i1[i] + (k * x(i)).sinh() * i2[i]) / denom)
        .collect()
}

fn sl_checked(a: f64, b: &[f64]) -> Result<Vec<f64>> {
    let fd = sl_fd(a, b);
    let green = sl_green(a, b);
    let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let discrepancy = fd.iter().zip(&green).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    if discrepancy > SL_TOL * scale {
        return Err(AnomalousError::SlMismatch { discrepancy });
    }
    Ok(fd)
}

/// Solves −a u0″ + u0 = b row by row with u0 = 0 at both ends. The finite
/// difference solution is returned after agreeing with the Green-kernel
/// quadrature to 1e-5·max(1, ‖u0‖∞).
pub fn solve_sturm_liouville(a_value: f64, b: &SampledField) -> Result<SampledField> {
    check_a(a_value)?;
    b.require_unit_rows()?;
    let rows: Vec<Vec<f64>> = (0..b.n_rows())
        .into_par_iter()
        .map(|j| sl_checked(a_value, b.row(j)))
        .collect::<Result<_>>()?;
    b.with_values(rows.concat())
}

/// The two branches of the two-scale limit u0(x1, x2, y2): the solution
/// for a = 1 (taken on the fraction θ of the period) and for a = c.
#[derive(Clone, Debug)]
pub struct U0Branches {
    pub phase_one: SampledField,
    pub phase_c: SampledField,
    /// sup |θu0₁ + (1−θ)u0_c − u|.
    pub mean_deviation: f64,
}

pub fn build_u0(params: &SpectralParams, u: &SampledField) -> Result<U0Branches> {
    let b = solve_b(params, u)?;
    let phase_one = solve_sturm_liouville(1.0, &b)?;
    let phase_c = solve_sturm_liouville(params.c, &b)?;
    let t = params.theta;
    let mean_deviation = phase_one
        .values()
        .iter()
        .zip(phase_c.values())
        .zip(u.values())
        .fold(0.0f64, |m, ((p, q), v)| m.max((t * p + (1.0 - t) * q - v).abs()));
    if mean_deviation > MEAN_TOL {
        return Err(AnomalousError::MeanIdentity { deviation: mean_deviation });
    }
    Ok(U0Branches { phase_one, phase_c, mean_deviation })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub eps: f64,
    pub energy_eps: f64,
    pub limit_energy: f64,
    pub gap: f64,
    /// ∫|uε|².
    pub l2_sq: f64,
}

/// The reciprocal 1/ε when it is an integer.
pub fn periods(eps: f64) -> Option<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return None;
    }
    let m = (1.0 / eps).round();
    ((1.0 / eps - m).abs() <= 1e-9 * m).then_some(m as usize)
}

fn branch_energy(a: f64, row: &[f64], dx: f64) -> (f64, f64) {
    let grad: f64 = row.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / dx;
    let n = row.len();
    let mass: f64 = row.iter().enumerate().map(|(i, v)| if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * v * v).sum::<f64>() * dx;
    (a * grad + mass, mass)
}

/// Fε(uε) for the recovery sequence uε(x) = u0(x1, x2, x2/ε).
///
/// uε is sampled on n_fine + 1 nodes in x1 and n_fine cells in x2;
/// 1/ε must be an integer and n_fine·ε (cells per period) an integer ≥ 16.
/// The x1-gradient uses forward differences, the mass term the trapezoid
/// rule. An x2-cell cut by a phase interface weights the two branch
/// energies of its row by the exact phase shares. The limit is [`gamma_limit_fourier`] on the same x1 grid.
pub fn recovery_energy(params: &SpectralParams, u: &impl Profile, eps: f64, n_fine: usize) -> Result<RecoveryResult> {
    let m = periods(eps).ok_or_else(|| AnomalousError::Resolution(format!("1/eps must be an integer, got eps = {eps}")))?;
    if n_fine % m != 0 || n_fine / m < 16 {
        return Err(AnomalousError::Resolution(format!(
            "n_fine·eps must be an integer ≥ 16 (n_fine = {n_fine}, 1/eps = {m})"
        )));
    }
    let q = n_fine / m;
    let n1 = n_fine + 1;
    let dx = 1.0 / n_fine as f64;
    let x2 = Axis::unit_midpoints(n_fine);
    // Exact share of x2-cell j lying in the a = 1 phase {y2 mod 1 < θ}.
    let share_one = |j: usize| (params.theta * q as f64 - (j % q) as f64).clamp(0.0, 1.0);
    let blend = |t: f64, e1: (f64, f64), ec: (f64, f64)| (t * e1.0 + (1.0 - t) * ec.0, t * e1.1 + (1.0 - t) * ec.1);

    let (field, rows_energy): (SampledField, Vec<(f64, f64)>) = if u.x2_independent() {
        let f = SampledField::from_fn_1d(n1, |x| u.eval(x, 0.5))?;
        let br = build_u0(params, &f)?;
        let e1 = branch_energy(1.0, br.phase_one.row(0), dx);
        let ec = branch_energy(params.c, br.phase_c.row(0), dx);
        let rows = (0..n_fine).map(|j| blend(share_one(j), e1, ec)).collect();
        (f, rows)
    } else {
        let f = SampledField::from_fn_2d(n1, n_fine, |a, b| u.eval(a, b))?;
        let b = solve_b(params, &f)?;
        let rows = (0..n_fine)
            .into_par_iter()
            .map(|j| {
                let t = share_one(j);
                let branch = |a: f64| -> Result<(f64, f64)> { Ok(branch_energy(a, &sl_checked(a, b.row(j))?, dx)) };
                let e1 = if t > 0.0 { branch(1.0)? } else { (0.0, 0.0) };
                let ec = if t < 1.0 { branch(params.c)? } else { (0.0, 0.0) };
                Ok(blend(t, e1, ec))
            })
            .collect::<Result<Vec<_>>>()?;
        (f, rows)
    };
    let energy_eps = rows_energy.iter().enumerate().map(|(j, e)| x2.weight(j) * e.0).sum::<f64>();
    let l2_sq = rows_energy.iter().enumerate().map(|(j, e)| x2.weight(j) * e.1).sum::<f64>();
    let limit_energy = gamma_limit_fourier(params, &field)?;
    let gap = if limit_energy == 0.0 {
        if energy_eps == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (energy_eps - limit_energy).abs() / limit_energy
    };
    Ok(RecoveryResult { eps, energy_eps, limit_energy, gap, l2_sq })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionCase {
    pub contraction: String,
    pub energy_u: f64,
    pub energy_tu: f64,
    /// True when F(T∘u) > F(u), a candidate against the Markov property.
    pub increases: bool,
}

/// Compares F(T∘u) with F(u) for the unit contraction T(s) = min(max(s,0),1)
/// and the normal contraction T(s) = |s|. Purely a report.
pub fn contraction_probe(params: &SpectralParams, u: &SampledField) -> Result<Vec<ContractionCase>> {
    let base = gamma_limit_fourier(params, u)?;
    let cases: [(&str, fn(f64) -> f64); 2] = [("unit_clamp", |s| s.clamp(0.0, 1.0)), ("abs", f64::abs)];
    cases
        .iter()
        .map(|(name, t)| {
            let e = gamma_limit_fourier(params, &u.map(t))?;
            Ok(ContractionCase {
                contraction: name.to_string(),
                energy_u: base,
                energy_tu: e,
                increases: e > base * (1.0 + 1e-12),
            })
        })
        .collect()
}
