//! Small symmetric linear algebra for conductivity tensors in two and three
//! dimensions.
//!
//! Everything here works on fixed-capacity value types ([`Vector`],
//! [`SymMat`], [`SquareMat`]) so that grid-sampled coefficient fields can be
//! stored as flat `Vec<SymMat>` without per-cell allocation. The
//! eigendecomposition is closed-form in 2D and cyclic Jacobi in 3D.

use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};

use thiserror::Error;

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// Relative symmetry tolerance enforced by [`SymMat`] constructors.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (max |m_ij - m_ji| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("non-finite entry")]
    NonFinite,
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("cannot infer dimension from empty vector lists")]
    Empty,
}

fn check_dim(dim: usize) -> Result<(), LinalgError> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(LinalgError::UnsupportedDimension(dim))
    }
}

/// A vector of ℝ² or ℝ³.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    dim: usize,
    data: [f64; MAX_DIM],
}

impl Vector {
    pub fn new(entries: &[f64]) -> Result<Self, LinalgError> {
        check_dim(entries.len())?;
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let mut data = [0.0; MAX_DIM];
        data[..entries.len()].copy_from_slice(entries);
        Ok(Self { dim: entries.len(), data })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "unsupported dimension {dim}");
        Self { dim, data: [0.0; MAX_DIM] }
    }

    /// Unchecked constructor for hot loops; trailing entries beyond `dim` must be zero.
    pub(crate) fn from_array(dim: usize, data: [f64; MAX_DIM]) -> Self {
        Self { dim, data }
    }

    /// The `i`-th canonical basis vector.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.dim]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Self {
        *self * (1.0 / self.norm())
    }

    /// Cross product (3D only).
    pub fn cross(&self, other: &Vector) -> Vector {
        assert!(self.dim == 3 && other.dim == 3);
        let (a, b) = (self.data, other.data);
        Vector {
            dim: 3,
            data: [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]],
        }
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_slice())
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(mut self, rhs: Vector) -> Vector {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.data[i] += rhs.data[i];
        }
        self
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(self, rhs: Vector) -> Vector {
        self + (-rhs)
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self * -1.0
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(mut self, s: f64) -> Vector {
        for x in &mut self.data[..self.dim] {
            *x *= s;
        }
        self
    }
}

/// A general square matrix, used for rotations and reflections.
#[derive(Clone, Copy, PartialEq)]
pub struct SquareMat {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl SquareMat {
    pub fn identity(dim: usize) -> Self {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Self { dim, m }
    }

    pub fn from_columns(cols: &[Vector]) -> Result<Self, LinalgError> {
        let dim = cols.len();
        check_dim(dim)?;
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (j, c) in cols.iter().enumerate() {
            if c.dim() != dim {
                return Err(LinalgError::DimensionMismatch { expected: dim, found: c.dim() });
            }
            for i in 0..dim {
                m[i][j] = c[i];
            }
        }
        Ok(Self { dim, m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn column(&self, j: usize) -> Vector {
        let mut v = Vector::zeros(self.dim);
        for i in 0..self.dim {
            v.data[i] = self.m[i][j];
        }
        v
    }

    pub fn transpose(&self) -> Self {
        let mut t = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out.data[i] = (0..self.dim).map(|j| self.m[i][j] * v.data[j]).sum();
        }
        out
    }

    pub fn matmul(&self, other: &SquareMat) -> SquareMat {
        let mut out = SquareMat::identity(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = (0..self.dim).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        out
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.dim {
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// Householder reflection mapping the unit vector `n` onto `e1`.
    ///
    /// Returns the identity exactly when `n == e1`, so axis-aligned inputs
    /// round-trip without rounding.
    pub fn reflection_to_e1(n: &Vector) -> SquareMat {
        let dim = n.dim();
        let e1 = Vector::basis(dim, 0);
        let w = *n - e1;
        let ww = w.dot(&w);
        let mut h = SquareMat::identity(dim);
        if ww == 0.0 {
            return h;
        }
        for i in 0..dim {
            for j in 0..dim {
                h.m[i][j] -= 2.0 * w[i] * w[j] / ww;
            }
        }
        h
    }
}

impl fmt::Debug for SquareMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.dim).map(|i| &self.m[i][..self.dim]).collect();
        write!(f, "{rows:?}")
    }
}

/// A symmetric d×d real matrix, d ∈ {2, 3}.
#[derive(Clone, Copy, PartialEq)]
pub struct SymMat {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl SymMat {
    /// Builds a matrix from row-major rows, rejecting asymmetry beyond
    /// [`SYMMETRY_TOL`] relative to the largest entry. The stored matrix is the
    /// exact symmetric part of the input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        check_dim(dim)?;
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(LinalgError::DimensionMismatch { expected: dim, found: r.len() });
            }
            for (j, &x) in r.iter().enumerate() {
                if !x.is_finite() {
                    return Err(LinalgError::NonFinite);
                }
                m[i][j] = x;
            }
        }
        let scale = m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
        let mut asym = 0.0f64;
        for i in 0..dim {
            for j in 0..i {
                asym = asym.max((m[i][j] - m[j][i]).abs());
                let avg = 0.5 * (m[i][j] + m[j][i]);
                m[i][j] = avg;
                m[j][i] = avg;
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(LinalgError::NotSymmetric { asymmetry: asym });
        }
        Ok(Self { dim, m })
    }

    /// Builds a matrix from row-major flat storage.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        let rows: Vec<&[f64]> = entries.chunks(dim).collect();
        Self::from_rows(&rows)
    }

    /// Builds a matrix from its upper triangle in row-major order
    /// (`m00 m01 m11` in 2D, `m00 m01 m02 m11 m12 m22` in 3D).
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(LinalgError::DimensionMismatch { expected, found: upper.len() });
        }
        if upper.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                m[i][j] = upper[k];
                m[j][i] = upper[k];
                k += 1;
            }
        }
        Ok(Self { dim, m })
    }

    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in i..self.dim {
                out.push(self.m[i][j]);
            }
        }
        out
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "unsupported dimension {dim}");
        Self { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, s: f64) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.m[i][i] = s;
        }
        out
    }

    pub fn diag(entries: &[f64]) -> Result<Self, LinalgError> {
        check_dim(entries.len())?;
        let mut out = Self::zeros(entries.len());
        for (i, &x) in entries.iter().enumerate() {
            out.m[i][i] = x;
        }
        Ok(out)
    }

    /// The rank-one projector-like matrix `v ⊗ v`.
    pub fn outer(v: &Vector) -> Self {
        let mut out = Self::zeros(v.dim());
        for i in 0..v.dim() {
            for j in 0..v.dim() {
                out.m[i][j] = v[i] * v[j];
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.m[i][..self.dim].to_vec()).collect()
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.rows().into_iter().flatten().collect()
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out.data[i] = (0..self.dim).map(|j| self.m[i][j] * v.data[j]).sum();
        }
        out
    }

    /// The quadratic form `m x · x`.
    pub fn quad(&self, x: &Vector) -> f64 {
        self.mul_vec(x).dot(x)
    }

    /// `q m qᵀ`, re-symmetrized.
    pub fn conjugate(&self, q: &SquareMat) -> SymMat {
        let d = self.dim;
        let mut tmp = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                tmp[i][j] = (0..d).map(|k| q.m[i][k] * self.m[k][j]).sum();
            }
        }
        let mut out = SymMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.m[i][j] = (0..d).map(|k| tmp[i][k] * q.m[j][k]).sum();
            }
        }
        out.symmetrize();
        out
    }

    fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in 0..i {
                let avg = 0.5 * (self.m[i][j] + self.m[j][i]);
                self.m[i][j] = avg;
                self.m[j][i] = avg;
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn det(&self) -> f64 {
        SquareMat { dim: self.dim, m: self.m }.det()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0, |a: f64, x| a.max(x.abs()))
    }

    pub fn spectral_radius(&self) -> f64 {
        let e = sym_eig(self);
        e.eigenvalues.as_slice().iter().fold(0.0, |a: f64, x| a.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|x| x.is_finite())
    }
}

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rows())
    }
}

impl Add for SymMat {
    type Output = SymMat;
    fn add(mut self, rhs: SymMat) -> SymMat {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] += rhs.m[i][j];
            }
        }
        self
    }
}

impl Sub for SymMat {
    type Output = SymMat;
    fn sub(self, rhs: SymMat) -> SymMat {
        self + rhs * -1.0
    }
}

impl Mul<f64> for SymMat {
    type Output = SymMat;
    fn mul(mut self, s: f64) -> SymMat {
        for row in &mut self.m {
            for x in row {
                *x *= s;
            }
        }
        self
    }
}

/// `m = rotation · diag(eigenvalues) · rotationᵀ`, eigenvalues ascending.
#[derive(Clone, Copy, Debug)]
pub struct EigenDecomp {
    pub rotation: SquareMat,
    pub eigenvalues: Vector,
}

impl EigenDecomp {
    pub fn reconstruct(&self) -> SymMat {
        let d = self.rotation.dim();
        let mut out = SymMat::zeros(d);
        for k in 0..d {
            let v = self.rotation.column(k);
            out = out + SymMat::outer(&v) * self.eigenvalues[k];
        }
        out
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.dim() - 1]
    }

    pub fn spectral_radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eig(m: &SymMat) -> EigenDecomp {
    let (vals, vecs) = match m.dim {
        2 => eig2(m),
        _ => jacobi3(m),
    };
    let d = m.dim;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let mut rotation = SquareMat::identity(d);
    let mut eigenvalues = Vector::zeros(d);
    for (k, &src) in order.iter().enumerate() {
        eigenvalues.data[k] = vals[src];
        for i in 0..d {
            rotation.m[i][k] = vecs[i][src];
        }
    }
    EigenDecomp { rotation, eigenvalues }
}

type Eig = ([f64; MAX_DIM], [[f64; MAX_DIM]; MAX_DIM]);

fn eig2(m: &SymMat) -> Eig {
    let (a, b, c) = (m.m[0][0], m.m[0][1], m.m[1][1]);
    let mut vecs = [[0.0; MAX_DIM]; MAX_DIM];
    if b == 0.0 {
        vecs[0][0] = 1.0;
        vecs[1][1] = 1.0;
        return ([a, c, 0.0], vecs);
    }
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    let phi = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = phi.sin_cos();
    // column 0 carries mean + r, column 1 carries mean - r
    vecs[0][0] = co;
    vecs[1][0] = s;
    vecs[0][1] = -s;
    vecs[1][1] = co;
    ([mean + r, mean - r, 0.0], vecs)
}

fn jacobi3(m: &SymMat) -> Eig {
    let mut a = m.m;
    let mut v = SquareMat::identity(3).m;
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return ([0.0; MAX_DIM], v);
    }
    for _ in 0..64 {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off <= 1e-18 * norm {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = SquareMat::identity(3).m;
            rot[p][p] = c;
            rot[q][q] = c;
            rot[p][q] = s;
            rot[q][p] = -s;
            // a <- rotᵀ a rot, v <- v rot
            let mut ar = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    ar[i][j] = (0..3).map(|k| a[i][k] * rot[k][j]).sum();
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = (0..3).map(|k| rot[k][i] * ar[k][j]).sum();
                }
            }
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            let mut vr = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    vr[i][j] = (0..3).map(|k| v[i][k] * rot[k][j]).sum();
                }
            }
            v = vr;
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Threshold scale shared by all relative spectral tests.
fn spectral_scale(e: &EigenDecomp) -> f64 {
    e.spectral_radius().max(1.0)
}

/// Orthonormal basis of the eigenspace with eigenvalues `≤ tol·max(1, ρ)`.
///
/// Fails with [`LinalgError::NotPsd`] when an eigenvalue lies below
/// `−tol·max(1, ρ)`.
pub fn kernel_basis(m: &SymMat, tol: f64) -> Result<Vec<Vector>, LinalgError> {
    let e = sym_eig(m);
    let cut = tol * spectral_scale(&e);
    if e.min() < -cut {
        return Err(LinalgError::NotPsd { eigenvalue: e.min() });
    }
    Ok((0..m.dim)
        .filter(|&k| e.eigenvalues[k] <= cut)
        .map(|k| e.rotation.column(k))
        .collect())
}

/// True iff the smallest eigenvalue exceeds `tol·max(1, ρ)`.
pub fn is_positive_definite(m: &SymMat, tol: f64) -> bool {
    let e = sym_eig(m);
    e.min() > tol * spectral_scale(&e)
}

/// Principal square root of a PSD matrix. Eigenvalues in `[−1e-10·ρ, 0)` are
/// clamped to zero.
pub fn sqrt_psd(m: &SymMat) -> Result<SymMat, LinalgError> {
    let mut e = sym_eig(m);
    let rho = e.spectral_radius();
    if e.min() < -1e-10 * rho {
        return Err(LinalgError::NotPsd { eigenvalue: e.min() });
    }
    for k in 0..m.dim {
        e.eigenvalues.data[k] = e.eigenvalues.data[k].max(0.0).sqrt();
    }
    Ok(e.reconstruct())
}

/// Orthonormalizes `vectors` (any common length) by modified Gram–Schmidt
/// with one re-orthogonalization pass. A vector is kept when its residual
/// exceeds `tol` times the largest input norm.
pub fn orthonormalize(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let scale = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    if scale == 0.0 {
        return basis;
    }
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in w.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > tol * scale {
            basis.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Orthonormal basis of `{x ∈ ℝⁿ : r·x = 0 for every row r}`.
pub fn null_space(rows: &[Vec<f64>], n: usize, tol: f64) -> Vec<Vec<f64>> {
    let row_basis = orthonormalize(rows, tol);
    let mut candidates = row_basis.clone();
    let before = candidates.len();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        candidates.push(e);
    }
    // Completing the row basis with canonical vectors; unit inputs make the
    // relative threshold absolute.
    let full = orthonormalize(&candidates, tol.max(1e-8));
    full.into_iter().skip(before).collect()
}

fn common_dim(a: &[Vector], b: &[Vector]) -> Result<usize, LinalgError> {
    let dim = a.iter().chain(b).map(Vector::dim).next().ok_or(LinalgError::Empty)?;
    for v in a.iter().chain(b) {
        if v.dim() != dim {
            return Err(LinalgError::DimensionMismatch { expected: dim, found: v.dim() });
        }
    }
    Ok(dim)
}

/// Decides `span(spanners) = span(kernel)^⊥` by rank tests at threshold `tol`.
pub fn span_equals_orthocomplement(
    spanners: &[Vector],
    kernel: &[Vector],
    tol: f64,
) -> Result<bool, LinalgError> {
    let dim = common_dim(spanners, kernel)?;
    let s = orthonormalize(&spanners.iter().map(Vector::to_vec).collect::<Vec<_>>(), tol);
    let k = orthonormalize(&kernel.iter().map(Vector::to_vec).collect::<Vec<_>>(), tol);
    if s.len() + k.len() != dim {
        return Ok(false);
    }
    let orthogonal = s
        .iter()
        .all(|a| k.iter().all(|b| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().abs() <= tol.sqrt()));
    Ok(orthogonal)
}

/// Numerical rank of a vector family.
pub fn rank(vectors: &[Vector], tol: f64) -> usize {
    orthonormalize(&vectors.iter().map(Vector::to_vec).collect::<Vec<_>>(), tol).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x).unwrap()
    }

    fn rel_err(a: &SymMat, b: &SymMat) -> f64 {
        (*a - *b).frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn eig_identity_and_projector() {
        let e = sym_eig(&SymMat::identity(2));
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0]);

        let p = SymMat::outer(&Vector::basis(2, 1));
        let e = sym_eig(&p);
        assert_eq!(e.eigenvalues.as_slice(), &[0.0, 1.0]);
        let top = e.rotation.column(1);
        assert!((top[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_two_by_two_characteristic_polynomial() {
        // λ² − 4λ + 3 = 0
        let m = SymMat::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&m);
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-14);
        assert!(rel_err(&e.reconstruct(), &m) < 1e-14);
    }

    #[test]
    fn eig_three_by_three_reconstructs() {
        let m = SymMat::from_rows(&[[4.0, 1.0, -2.0], [1.0, 3.0, 0.5], [-2.0, 0.5, 1.0]]).unwrap();
        let e = sym_eig(&m);
        assert!(rel_err(&e.reconstruct(), &m) < 1e-13);
        let q = e.rotation;
        let qtq = q.transpose().matmul(&q);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq.get(i, j) - want).abs() < 1e-13);
            }
        }
        assert!(e.eigenvalues[0] <= e.eigenvalues[1] && e.eigenvalues[1] <= e.eigenvalues[2]);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let err = SymMat::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, LinalgError::NotSymmetric { .. }));
        assert!(SymMat::from_rows(&[[1.0, f64::NAN], [f64::NAN, 1.0]]).is_err());
        assert!(SymMat::from_rows(&[[1.0]]).is_err());
    }

    #[test]
    fn kernel_examples() {
        let k = kernel_basis(&SymMat::outer(&Vector::basis(2, 1)), 1e-10).unwrap();
        assert_eq!(k.len(), 1);
        assert!((k[0][0].abs() - 1.0).abs() < 1e-15);

        assert!(kernel_basis(&SymMat::identity(3), 1e-10).unwrap().is_empty());

        let k = kernel_basis(&SymMat::diag(&[0.0, 0.0, 1.0]).unwrap(), 1e-10).unwrap();
        assert_eq!(k.len(), 2);
        for b in &k {
            assert!(b[2].abs() < 1e-15);
        }

        let err = kernel_basis(&SymMat::diag(&[-1.0, 1.0]).unwrap(), 1e-10).unwrap_err();
        assert!(matches!(err, LinalgError::NotPsd { .. }));
    }

    #[test]
    fn positive_definiteness_examples() {
        assert!(is_positive_definite(&SymMat::identity(2), 1e-10));
        assert!(!is_positive_definite(&SymMat::outer(&Vector::basis(2, 1)), 1e-10));
        assert!(!is_positive_definite(&SymMat::diag(&[1e-16, 1.0]).unwrap(), 1e-10));
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(sqrt_psd(&SymMat::identity(2)).unwrap(), SymMat::identity(2));
        let r = sqrt_psd(&SymMat::diag(&[4.0, 9.0]).unwrap()).unwrap();
        assert!(rel_err(&r, &SymMat::diag(&[2.0, 3.0]).unwrap()) < 1e-15);
        let p = SymMat::outer(&Vector::basis(2, 1));
        assert!(rel_err(&sqrt_psd(&p).unwrap(), &p) < 1e-15);
        assert!(sqrt_psd(&SymMat::diag(&[-1.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn orthocomplement_examples() {
        let e1 = Vector::basis(2, 0);
        let e2 = Vector::basis(2, 1);
        assert!(span_equals_orthocomplement(&[e1, e2], &[], 1e-10).unwrap());
        assert!(span_equals_orthocomplement(&[e1], &[e2], 1e-10).unwrap());
        assert!(!span_equals_orthocomplement(&[e1], &[e1], 1e-10).unwrap());
        let e3 = Vector::basis(3, 2);
        assert!(matches!(
            span_equals_orthocomplement(&[e1], &[e3], 1e-10),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert!(span_equals_orthocomplement(&[], &[], 1e-10).is_err());
    }

    #[test]
    fn householder_maps_direction_to_e1() {
        let n = v(&[0.6, 0.0, 0.8]);
        let h = SquareMat::reflection_to_e1(&n);
        let hn = h.mul_vec(&n);
        assert!((hn[0] - 1.0).abs() < 1e-15 && hn[1].abs() < 1e-15 && hn[2].abs() < 1e-15);
        assert_eq!(SquareMat::reflection_to_e1(&Vector::basis(2, 0)), SquareMat::identity(2));
    }

    #[test]
    fn null_space_of_constraint_rows() {
        let rows = vec![vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]];
        let ns = null_space(&rows, 6, 1e-12);
        assert_eq!(ns.len(), 4);
        for x in &ns {
            for r in &rows {
                assert!(r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-14);
            }
        }
    }
}
