//! Small dense complex linear algebra.
//!
//! Every matrix in this crate is at most a few dozen entries on a side, so
//! the kernel favours simple, well-conditioned algorithms over blocking or
//! cache tricks: one-sided Jacobi for singular values and LU with partial
//! pivoting for determinants and solves. Matrices are value types; every
//! operation returns a new matrix.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scalar type for every channel coefficient, precoder and decoder entry.
///
/// Real-field experiments store values with an imaginary part of exactly zero.
pub type Scalar = Complex64;

const ZERO: Scalar = Complex64::new(0.0, 0.0);
const ONE: Scalar = Complex64::new(1.0, 0.0);

const MAX_JACOBI_SWEEPS: usize = 80;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular at the requested rank tolerance")]
    SingularMatrix,
    #[error("rank tolerance must lie strictly between 0 and 1, got {0}")]
    InvalidTolerance(f64),
}

/// Whether an experiment runs over the real or the complex field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    #[default]
    Complex,
}

impl Field {
    /// Prefactor applied to `log2(1 + SINR)`: one half for real signalling.
    pub fn rate_prefactor(self) -> f64 {
        match self {
            Field::Real => 0.5,
            Field::Complex => 1.0,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Real => "real",
            Field::Complex => "complex",
        })
    }
}

impl std::str::FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(format!("unknown field mode '{other}' (expected real|complex)")),
        }
    }
}

/// Relative threshold used for every numerical rank decision: a singular
/// value counts iff it exceeds `τ` times the reference scale (by default the
/// largest singular value of the matrix itself).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RankTolerance(f64);

impl RankTolerance {
    pub const DEFAULT: RankTolerance = RankTolerance(1e-9);

    pub fn new(tau: f64) -> Result<Self, NumericsError> {
        if tau > 0.0 && tau < 1.0 {
            Ok(RankTolerance(tau))
        } else {
            Err(NumericsError::InvalidTolerance(tau))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<f64> for RankTolerance {
    type Error = NumericsError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        RankTolerance::new(value)
    }
}

impl From<RankTolerance> for f64 {
    fn from(t: RankTolerance) -> f64 {
        t.0
    }
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Scalar>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows x cols");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Scalar) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from complex rows. All rows must have equal length.
    pub fn from_rows<R: AsRef<[Scalar]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Builds a real-valued matrix (imaginary parts exactly zero).
    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend(r.iter().map(|&x| Complex64::new(x, 0.0)));
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column_vector(entries: &[Scalar]) -> Self {
        Matrix::from_vec(entries.len(), 1, entries.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Scalar> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, factor: Scalar) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    pub fn try_add(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.check_same_shape(other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_sub(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.check_same_shape(other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn try_mul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != other.rows {
            return Err(self.mismatch(other));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Matrix product. Panics on incompatible shapes; use [`Matrix::try_mul`]
    /// when the shapes come from untrusted input.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        self.try_mul(other).expect("incompatible shapes in matrix product")
    }

    /// Horizontal concatenation `[a | b | ...]`.
    pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix, NumericsError> {
        let rows = match blocks.iter().find(|b| b.cols > 0) {
            Some(b) => b.rows,
            None => blocks.first().map_or(0, |b| b.rows),
        };
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            if b.cols == 0 {
                continue;
            }
            if b.rows != rows {
                return Err(NumericsError::ShapeMismatch {
                    left_rows: rows,
                    left_cols: offset,
                    right_rows: b.rows,
                    right_cols: b.cols,
                });
            }
            for i in 0..rows {
                for j in 0..b.cols {
                    out[(i, offset + j)] = b[(i, j)];
                }
            }
            offset += b.cols;
        }
        Ok(out)
    }

    pub fn select_columns(&self, columns: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, columns.len(), |i, j| self[(i, columns[j])])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), self.cols, |i, j| self[(rows[i], j)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<(), NumericsError> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(self.mismatch(other))
        }
    }

    fn mismatch(&self, other: &Matrix) -> NumericsError {
        NumericsError::ShapeMismatch {
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = Scalar;

    fn index(&self, (i, j): (usize, usize)) -> &Scalar {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Scalar {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:>10.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Thin singular value decomposition `m = u·diag(σ)·vᴴ` with singular values
/// in descending order. Columns of `u` belonging to zero singular values are
/// zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of a working copy are rotated pairwise until mutually orthogonal;
/// the column norms are then the singular values and the normalised columns
/// the left singular vectors.
pub fn svd(m: &Matrix) -> Svd {
    let (rows, cols) = m.shape();
    // column-major working copy
    let mut work: Vec<Vec<Scalar>> = (0..cols).map(|j| m.column(j)).collect();
    let mut vcols: Vec<Vec<Scalar>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { ONE } else { ZERO }).collect())
        .collect();

    // columns below this squared norm are numerically zero; rotating them
    // only stalls convergence
    let negligible = (f64::EPSILON * m.frobenius_norm()).powi(2);

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (head, tail) = work.split_at_mut(j);
                let (ai, aj) = (&mut head[i], &mut tail[0]);
                let alpha: f64 = ai.iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = aj.iter().map(|z| z.norm_sqr()).sum();
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma: Scalar = ai.iter().zip(aj.iter()).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let x = ai[k];
                    let y = aj[k] * phase;
                    ai[k] = x * c - y * s;
                    aj[k] = x * s + y * c;
                }
                let (head, tail) = vcols.split_at_mut(j);
                let (vi, vj) = (&mut head[i], &mut tail[0]);
                for k in 0..cols {
                    let x = vi[k];
                    let y = vj[k] * phase;
                    vi[k] = x * c - y * s;
                    vj[k] = x * s + y * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = work
        .iter()
        .enumerate()
        .map(|(j, col)| (j, col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut u = Matrix::zeros(rows, cols);
    let mut v = Matrix::zeros(cols, cols);
    let mut singular_values = Vec::with_capacity(cols);
    for (dst, &(src, sigma)) in order.iter().enumerate() {
        singular_values.push(sigma);
        if sigma > 0.0 {
            for k in 0..rows {
                u[(k, dst)] = work[src][k] / sigma;
            }
        }
        for k in 0..cols {
            v[(k, dst)] = vcols[src][k];
        }
    }
    Svd {
        u,
        singular_values,
        v,
    }
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    svd(m).singular_values
}

/// Number of singular values exceeding `τ·σ₁`; zero for the all-zero matrix.
pub fn rank(m: &Matrix, tol: RankTolerance) -> usize {
    let sv = singular_values(m);
    let top = sv.first().copied().unwrap_or(0.0);
    count_above(&sv, tol.value() * top)
}

/// Number of singular values exceeding `τ·scale`.
///
/// Used when a sub-block must be judged against the magnitude of the signal
/// it belongs to, so that a block which is zero up to rounding is not
/// promoted to full rank by its own tiny `σ₁`.
pub fn rank_relative_to(m: &Matrix, scale: f64, tol: RankTolerance) -> usize {
    count_above(&singular_values(m), tol.value() * scale)
}

fn count_above(sv: &[f64], threshold: f64) -> usize {
    if sv.first().is_none_or(|&s| s == 0.0) {
        return 0;
    }
    sv.iter().filter(|&&s| s > threshold).count()
}

/// Orthonormal basis of the numerical column space; one column per unit of
/// [`rank`].
pub fn column_space_basis(m: &Matrix, tol: RankTolerance) -> Matrix {
    let Svd {
        u, singular_values, ..
    } = svd(m);
    let top = singular_values.first().copied().unwrap_or(0.0);
    let r = count_above(&singular_values, tol.value() * top);
    u.select_columns(&(0..r).collect::<Vec<_>>())
}

/// The `k` dominant left singular vectors of `m`. `k` is clamped to the
/// number of nonzero singular values.
pub fn dominant_subspace(m: &Matrix, k: usize) -> Matrix {
    let Svd {
        u, singular_values, ..
    } = svd(m);
    let k = k.min(singular_values.iter().filter(|&&s| s > 0.0).count());
    u.select_columns(&(0..k).collect::<Vec<_>>())
}

struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

fn lu_decompose(m: &Matrix) -> Lu {
    let n = m.rows();
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut singular = false;
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&a, &b| lu[(a, k)].norm().total_cmp(&lu[(b, k)].norm()))
            .unwrap_or(k);
        if lu[(pivot, k)] == ZERO {
            singular = true;
            continue;
        }
        if pivot != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(pivot, j)];
                lu[(pivot, j)] = tmp;
            }
            perm.swap(k, pivot);
            sign = -sign;
        }
        let d = lu[(k, k)];
        for i in (k + 1)..n {
            let factor = lu[(i, k)] / d;
            lu[(i, k)] = factor;
            for j in (k + 1)..n {
                let delta = factor * lu[(k, j)];
                lu[(i, j)] -= delta;
            }
        }
    }
    Lu {
        lu,
        perm,
        sign,
        singular,
    }
}

/// Determinant via LU with partial pivoting. Diagnostic only; rank decisions
/// go through singular values.
pub fn determinant(m: &Matrix) -> Result<Scalar, NumericsError> {
    if m.rows() != m.cols() {
        return Err(NumericsError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let Lu {
        lu, sign, singular, ..
    } = lu_decompose(m);
    if singular {
        return Ok(ZERO);
    }
    let prod = (0..m.rows()).fold(ONE, |acc, i| acc * lu[(i, i)]);
    Ok(prod * sign)
}

/// `log2 |det m|`, computed from the LU diagonal to avoid overflow.
pub fn log2_abs_determinant(m: &Matrix) -> Result<f64, NumericsError> {
    if m.rows() != m.cols() {
        return Err(NumericsError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let Lu { lu, singular, .. } = lu_decompose(m);
    if singular {
        return Err(NumericsError::SingularMatrix);
    }
    Ok((0..m.rows()).map(|i| lu[(i, i)].norm().log2()).sum())
}

/// Solves `m·x = y` for square, numerically full-rank `m`.
pub fn solve(m: &Matrix, y: &Matrix, tol: RankTolerance) -> Result<Matrix, NumericsError> {
    let n = m.rows();
    if n != m.cols() {
        return Err(NumericsError::NotSquare {
            rows: n,
            cols: m.cols(),
        });
    }
    if y.rows() != n {
        return Err(m.mismatch(y));
    }
    if rank(m, tol) < n {
        return Err(NumericsError::SingularMatrix);
    }
    let Lu {
        lu, perm, singular, ..
    } = lu_decompose(m);
    if singular {
        return Err(NumericsError::SingularMatrix);
    }
    let mut x = Matrix::zeros(n, y.cols());
    for c in 0..y.cols() {
        // forward substitution on the permuted right-hand side
        let mut z: Vec<Scalar> = perm.iter().map(|&p| y[(p, c)]).collect();
        for i in 0..n {
            for k in 0..i {
                let delta = lu[(i, k)] * z[k];
                z[i] -= delta;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let delta = lu[(i, k)] * z[k];
                z[i] -= delta;
            }
            z[i] /= lu[(i, i)];
        }
        for i in 0..n {
            x[(i, c)] = z[i];
        }
    }
    Ok(x)
}

/// Moore-Penrose left inverse `V·Σ⁻¹·Uᴴ` of a matrix with full column rank
/// at `tol`. Built from the SVD so the conditioning is not squared.
pub fn left_inverse(a: &Matrix, tol: RankTolerance) -> Result<Matrix, NumericsError> {
    let Svd {
        u,
        singular_values,
        v,
    } = svd(a);
    let top = singular_values.first().copied().unwrap_or(0.0);
    if count_above(&singular_values, tol.value() * top) < a.cols() {
        return Err(NumericsError::SingularMatrix);
    }
    let n = a.cols();
    Ok(Matrix::from_fn(n, a.rows(), |i, j| {
        (0..n)
            .map(|k| v[(i, k)] * u[(j, k)].conj() / singular_values[k])
            .sum()
    }))
}
