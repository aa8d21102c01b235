//! Two-phase rank-one laminates.
//!
//! The medium alternates slabs of phase 1 (volume fraction θ) and phase 2
//! across the unit normal n. Computations happen in a frame where n = e1,
//! reached by a Householder reflection that is the identity when n already
//! equals e1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    is_positive_definite, kernel_basis, null_space, orthonormalize, rank, span_equals_orthocomplement,
    sym_eig, LinalgError, SquareMat, SymMat, Vector,
};

/// Relative tolerance for structural checks on analytic inputs (PSD phases,
/// rank-one and rank-two shapes, kernels of A*).
pub const STRUCT_TOL: f64 = 1e-10;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaminateError {
    #[error("theta must lie in (0, 1), got {0}")]
    Theta(f64),
    #[error("direction must be a unit vector, got norm {0}")]
    Direction(f64),
    #[error("phases and direction disagree in dimension")]
    Dimension,
    #[error("{phase} is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { phase: &'static str, eigenvalue: f64 },
    #[error("{0}")]
    Structure(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Two PSD phases, the volume fraction θ of phase 1 and the unit normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LaminateDocument", into = "LaminateDocument")]
pub struct LaminateSpec {
    phase1: SymMat,
    phase2: SymMat,
    theta: f64,
    direction: Vector,
}

/// Serialized form: phases as row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateDocument {
    pub phase1: Vec<Vec<f64>>,
    pub phase2: Vec<Vec<f64>>,
    pub theta: f64,
    pub direction: Vec<f64>,
}

impl TryFrom<LaminateDocument> for LaminateSpec {
    type Error = LaminateError;
    fn try_from(doc: LaminateDocument) -> Result<Self, LaminateError> {
        LaminateSpec::new(
            SymMat::from_rows(&doc.phase1)?,
            SymMat::from_rows(&doc.phase2)?,
            doc.theta,
            Vector::new(&doc.direction)?,
        )
    }
}

impl From<LaminateSpec> for LaminateDocument {
    fn from(s: LaminateSpec) -> Self {
        LaminateDocument {
            phase1: s.phase1.rows(),
            phase2: s.phase2.rows(),
            theta: s.theta,
            direction: s.direction.to_vec(),
        }
    }
}

fn check_psd(m: &SymMat, phase: &'static str) -> Result<(), LaminateError> {
    let e = sym_eig(m);
    if e.min() < -STRUCT_TOL * e.spectral_radius().max(1.0) {
        return Err(LaminateError::NotPsd { phase, eigenvalue: e.min() });
    }
    Ok(())
}

impl LaminateSpec {
    pub fn new(phase1: SymMat, phase2: SymMat, theta: f64, direction: Vector) -> Result<Self, LaminateError> {
        if phase1.dim() != phase2.dim() || phase1.dim() != direction.dim() {
            return Err(LaminateError::Dimension);
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(LaminateError::Theta(theta));
        }
        let norm = direction.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(LaminateError::Direction(norm));
        }
        check_psd(&phase1, "phase1")?;
        check_psd(&phase2, "phase2")?;
        Ok(Self { phase1, phase2, theta, direction })
    }

    /// Lamination along `e1`.
    pub fn along_e1(phase1: SymMat, phase2: SymMat, theta: f64) -> Result<Self, LaminateError> {
        let d = phase1.dim();
        Self::new(phase1, phase2, theta, Vector::basis(d, 0))
    }

    pub fn phase1(&self) -> &SymMat {
        &self.phase1
    }

    pub fn phase2(&self) -> &SymMat {
        &self.phase2
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn direction(&self) -> &Vector {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.phase1.dim()
    }

    /// The spec with the phases (and volume fractions) exchanged.
    pub fn swapped(&self) -> Self {
        Self { phase1: self.phase2, phase2: self.phase1, theta: 1.0 - self.theta, direction: self.direction }
    }

    /// `1e-12·(‖A1‖ + ‖A2‖)`.
    pub fn default_a_tol(&self) -> f64 {
        1e-12 * (self.phase1.frobenius_norm() + self.phase2.frobenius_norm())
    }

    /// θA1 + (1−θ)A2.
    pub fn arithmetic_mean(&self) -> SymMat {
        self.phase1 * self.theta + self.phase2 * (1.0 - self.theta)
    }
}

/// `(1−θ) A1n·n + θ A2n·n`.
pub fn laminate_a(spec: &LaminateSpec) -> f64 {
    let n = &spec.direction;
    (1.0 - spec.theta) * spec.phase1.quad(n) + spec.theta * spec.phase2.quad(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Regular,
    DegenerateAverage,
}

#[derive(Clone, Debug)]
pub struct HomogenizedLaminate {
    pub a_value: f64,
    pub tensor: SymMat,
    pub branch: Branch,
    pub pd: bool,
    pub kernel: Vec<Vector>,
}

/// Effective tensor of the laminate.
///
/// For `a > a_tol` this is θA1 + (1−θ)A2 − θ(1−θ)/a·(A2−A1)n ⊗ (A2−A1)n,
/// evaluated in the n = e1 frame in a rearranged form whose n-row has no
/// subtractive cancellation:
/// A*n·n = p1·p2/a and A*n·t = (θ·p2·A1n·t + (1−θ)·p1·A2n·t)/a with
/// p_i = A_i n·n. Otherwise it is the arithmetic mean.
pub fn homogenize_laminate(spec: &LaminateSpec, a_tol: f64) -> HomogenizedLaminate {
    let a = laminate_a(spec);
    let theta = spec.theta;
    let (tensor, branch) = if a > a_tol {
        let q = SquareMat::reflection_to_e1(&spec.direction);
        let r1 = spec.phase1.conjugate(&q);
        let r2 = spec.phase2.conjugate(&q);
        (rotated_formula(&r1, &r2, theta, a).conjugate(&q.transpose()), Branch::Regular)
    } else {
        (spec.arithmetic_mean(), Branch::DegenerateAverage)
    };
    let pd = is_positive_definite(&tensor, STRUCT_TOL);
    let kernel = kernel_basis(&tensor, STRUCT_TOL).unwrap_or_default();
    HomogenizedLaminate { a_value: a, tensor, branch, pd, kernel }
}

fn rotated_formula(r1: &SymMat, r2: &SymMat, theta: f64, a: f64) -> SymMat {
    let d = r1.dim();
    let (p1, p2) = (r1.get(0, 0), r2.get(0, 0));
    let mut rows = vec![vec![0.0; d]; d];
    rows[0][0] = p1 * p2 / a;
    for j in 1..d {
        let v = (theta * p2 * r1.get(0, j) + (1.0 - theta) * p1 * r2.get(0, j)) / a;
        rows[0][j] = v;
        rows[j][0] = v;
    }
    for j in 1..d {
        for k in j..d {
            let wj = r2.get(0, j) - r1.get(0, j);
            let wk = r2.get(0, k) - r1.get(0, k);
            let v = theta * r1.get(j, k) + (1.0 - theta) * r2.get(j, k) - theta * (1.0 - theta) * wj * wk / a;
            rows[j][k] = v;
            rows[k][j] = v;
        }
    }
    SymMat::from_rows(&rows).expect("symmetric by construction")
}

/// The formula as literally written, without rearrangement. Kept as an
/// independent reference for tests.
pub fn homogenize_laminate_direct(spec: &LaminateSpec, a_tol: f64) -> SymMat {
    let a = laminate_a(spec);
    let mean = spec.arithmetic_mean();
    if a <= a_tol {
        return mean;
    }
    let w = (spec.phase2 - spec.phase1).mul_vec(&spec.direction);
    mean - SymMat::outer(&w) * (spec.theta * (1.0 - spec.theta) / a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubCondition {
    pub name: String,
    pub holds: bool,
    /// The tested quantity.
    pub value: f64,
    /// The quantity must exceed this.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub h2_holds: bool,
    pub details: Vec<SubCondition>,
}

impl ConditionReport {
    fn from_details(details: Vec<SubCondition>) -> Self {
        Self { h2_holds: details.iter().all(|c| c.holds), details }
    }

    pub fn get(&self, name: &str) -> Option<&SubCondition> {
        self.details.iter().find(|c| c.name == name)
    }
}

fn sub(name: &str, value: f64, threshold: f64) -> SubCondition {
    SubCondition { name: name.to_string(), holds: value > threshold, value, threshold }
}

fn det2(u: &Vector, v: &Vector) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

fn det3(u: &Vector, v: &Vector, w: &Vector) -> f64 {
    u.dot(&v.cross(w))
}

/// Unit tangent obtained by rotating the 2D normal a quarter turn.
fn tangent_2d(n: &Vector) -> Vector {
    Vector::new(&[-n[1], n[0]]).expect("finite")
}

fn require_dim(spec: &LaminateSpec, d: usize) -> Result<(), LaminateError> {
    if spec.dim() != d {
        return Err(LaminateError::Structure(format!("expected a {d}-dimensional laminate, got {}", spec.dim())));
    }
    Ok(())
}

fn check_rank_one(spec: &LaminateSpec, xi: &Vector) -> Result<(), LaminateError> {
    if xi.dim() != spec.dim() {
        return Err(LaminateError::Dimension);
    }
    let target = SymMat::outer(xi);
    let scale = spec.phase1.frobenius_norm().max(target.frobenius_norm());
    let err = (spec.phase1 - target).frobenius_norm();
    if err > STRUCT_TOL * scale {
        return Err(LaminateError::Structure(format!(
            "phase1 is not xi ⊗ xi (deviation {err:e})"
        )));
    }
    Ok(())
}

/// Conditions for a positive definite A* when A1 = ξ⊗ξ and A2 is positive
/// definite in two dimensions.
pub fn check_conditions_2d(spec: &LaminateSpec, xi: &Vector, tol: f64) -> Result<ConditionReport, LaminateError> {
    require_dim(spec, 2)?;
    check_rank_one(spec, xi)?;
    let n = &spec.direction;
    let a2n = spec.phase2.mul_vec(n);
    let e2 = sym_eig(&spec.phase2);
    Ok(ConditionReport::from_details(vec![
        sub("xi_dot_n", xi.dot(n).abs(), tol * xi.norm()),
        sub("det_xi_a2n", det2(xi, &a2n).abs(), tol * xi.norm() * a2n.norm()),
        sub("phase2_min_eigenvalue", e2.min(), tol * e2.spectral_radius().max(1.0)),
    ]))
}

/// The kernel direction η of a rank-two 3×3 phase.
fn rank_two_kernel(m: &SymMat, phase: &str) -> Result<Vector, LaminateError> {
    let k = kernel_basis(m, STRUCT_TOL)?;
    if k.len() != 1 {
        return Err(LaminateError::Structure(format!(
            "{phase} must have rank two (kernel dimension {})",
            k.len()
        )));
    }
    Ok(k[0])
}

/// Conditions for a positive definite A* when both phases have rank two in
/// three dimensions.
pub fn check_conditions_3d(spec: &LaminateSpec, tol: f64) -> Result<ConditionReport, LaminateError> {
    require_dim(spec, 3)?;
    let eta1 = rank_two_kernel(&spec.phase1, "phase1")?;
    let eta2 = rank_two_kernel(&spec.phase2, "phase2")?;
    let n = &spec.direction;
    let u = spec.phase1.mul_vec(n);
    let v = spec.phase2.mul_vec(n);
    let (uu, vv, uv) = (u.dot(&u), v.dot(&v), u.dot(&v));
    Ok(ConditionReport::from_details(vec![
        sub("det_n_eta1_eta2", det3(n, &eta1, &eta2).abs(), tol),
        sub("gram_a1n_a2n", uu * vv - uv * uv, tol * tol * uu * vv),
    ]))
}

/// Pairs (σ1, σ2) of constant fields with σi in the range of Ai and equal
/// normal components, as vectors of ℝ^{2d}.
fn admissible_pairs(spec: &LaminateSpec) -> Result<Vec<Vec<f64>>, LaminateError> {
    let d = spec.dim();
    let mut rows = Vec::new();
    for k in kernel_basis(&spec.phase1, STRUCT_TOL)? {
        let mut r = k.to_vec();
        r.extend(std::iter::repeat(0.0).take(d));
        rows.push(r);
    }
    for k in kernel_basis(&spec.phase2, STRUCT_TOL)? {
        let mut r = vec![0.0; d];
        r.extend(k.as_slice());
        rows.push(r);
    }
    let n = spec.direction.as_slice();
    let mut r = n.to_vec();
    r.extend(n.iter().map(|x| -x));
    rows.push(r);
    Ok(null_space(&rows, 2 * d, 1e-12))
}

/// Orthonormal basis of V, the set of averages θσ1 + (1−θ)σ2 of laminate
/// fields that are piecewise constant, take values in the phase ranges and
/// are divergence free (continuous normal component).
pub fn v_space_basis(spec: &LaminateSpec) -> Result<Vec<Vector>, LaminateError> {
    let d = spec.dim();
    let theta = spec.theta;
    let averages: Vec<Vec<f64>> = admissible_pairs(spec)?
        .into_iter()
        .map(|p| (0..d).map(|i| theta * p[i] + (1.0 - theta) * p[d + i]).collect())
        .collect();
    orthonormalize(&averages, 1e-10)
        .into_iter()
        .map(|v| Vector::new(&v).map_err(LaminateError::from))
        .collect()
}

/// The explicit 2D generators {ξ, (1−θ)t} (t the unit tangent), i.e. the
/// averages of χαξ + (1−χ)(αξ + βt) at (α, β) = (1, 0) and (0, 1).
pub fn v_space_generators_2d(spec: &LaminateSpec, xi: &Vector) -> Result<Vec<Vector>, LaminateError> {
    require_dim(spec, 2)?;
    check_rank_one(spec, xi)?;
    if !is_positive_definite(&spec.phase2, STRUCT_TOL) {
        return Err(LaminateError::Structure("phase2 must be positive definite".into()));
    }
    let t = tangent_2d(&spec.direction);
    if xi.dot(&spec.direction).abs() <= STRUCT_TOL * xi.norm() {
        // ξ ∥ t: the ξ-component cannot cross the interface, only tangential fields survive.
        return Ok(vec![t * (1.0 - spec.theta)]);
    }
    Ok(vec![*xi, t * (1.0 - spec.theta)])
}

/// Checks ker A* = V⊥.
pub fn verify_kernel_identity(spec: &LaminateSpec, tol: f64) -> Result<bool, LaminateError> {
    let hom = homogenize_laminate(spec, spec.default_a_tol());
    let kernel = kernel_basis(&hom.tensor, tol)?;
    let v = v_space_basis(spec)?;
    Ok(span_equals_orthocomplement(&v, &kernel, tol)?)
}

/// Dimension of V.
pub fn v_space_dim(spec: &LaminateSpec) -> Result<usize, LaminateError> {
    Ok(rank(&v_space_basis(spec)?, 1e-10))
}
