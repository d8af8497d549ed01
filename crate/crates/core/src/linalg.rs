//! Dense small-matrix kernels.
//!
//! Everything here works on row-major `f64` storage and is meant for the
//! n ≤ 16 systems this crate analyses. The three classical vector norms and
//! an H-weighted Euclidean norm are supported, together with their induced
//! matrix norms and logarithmic norms (matrix measures):
//!
//! ```text
//! μ₁[A] = max_j ( a_jj + Σ_{i≠j} |a_ij| )      column sums
//! μ₂[A] = ½ λ_max(A + Aᵀ)
//! μ∞[A] = max_i ( a_ii + Σ_{j≠i} |a_ij| )      row sums
//! μ_H[A] = μ₂(Lᵀ A L⁻ᵀ),   H = L Lᵀ
//! ```

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for the Jacobi eigensolver, relative to ‖S‖_F.
pub const EIG_TOL: f64 = 1e-12;
/// Sweep limit for the Jacobi eigensolver.
pub const EIG_MAX_SWEEPS: usize = 50;
/// Relative symmetry tolerance accepted by [`sym_eig_max`] and [`WeightedNorm::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(nrows, ncols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self::new(n, n, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map(Vec::len).unwrap_or(0);
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Self::new(rows, cols, m.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Dimension of a square matrix, or an error for rectangular input.
    pub fn order(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::invalid(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// ‖S − Sᵀ‖_F.
    pub fn asymmetry(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self[(i, j)] - self[(j, i)];
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// A + Aᵀ, exactly symmetric.
    pub fn symmetric_part_doubled(&self) -> Matrix {
        let n = self.rows;
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = self[(i, j)] + self[(j, i)];
            }
        }
        s
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        let n = a.order()?;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = a.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::Singular);
        }
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pmax <= f64::EPSILON * scale * 1e-2 {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm, sign })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    pub fn det(&self) -> f64 {
        (0..self.n)
            .map(|i| self.lu[i * self.n + i])
            .product::<f64>()
            * self.sign
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.n;
        let cols = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                self.solve(&e)
            })
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_columns(&cols)
    }
}

/// Condition number estimate κ₁(A) = ‖A‖₁‖A⁻¹‖₁ for a small matrix.
pub fn condition_number(a: &Matrix) -> Result<f64> {
    let lu = Lu::factor(a)?;
    let inv = lu.inverse()?;
    Ok(column_sum_norm(a) * column_sum_norm(&inv))
}

/// Lower-triangular Cholesky factor L with H = L Lᵀ.
pub fn cholesky(h: &Matrix) -> Result<Matrix> {
    let n = h.order()?;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = h[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Symmetric positive-definite weight H defining ‖x‖_H = √(xᵀHx).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNorm {
    h: Matrix,
    chol: Matrix,
}

impl WeightedNorm {
    pub fn new(h: Matrix) -> Result<Self> {
        h.order()?;
        let asym = h.asymmetry();
        if asym > SYMMETRY_TOL * h.frobenius_norm().max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let chol = cholesky(&h)?;
        Ok(Self { h, chol })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    /// Lᵀ x, whose Euclidean norm is ‖x‖_H.
    fn lower_transpose_times(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (i..n).map(|k| self.chol[(k, i)] * x[k]).sum())
            .collect()
    }

    /// Similarity transform M = Lᵀ A L⁻ᵀ, so that ‖A‖_H = ‖M‖₂ and μ_H[A] = μ₂[M].
    fn transform(&self, a: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if a.order()? != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.rows(),
            });
        }
        // C = A L⁻ᵀ, row by row: L cᵢ = aᵢ.
        let mut c = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= self.chol[(j, k)] * c[(i, k)];
                }
                c[(i, j)] = s / self.chol[(j, j)];
            }
        }
        self.chol.transpose().matmul(&c)
    }
}

/// Vector norm selector; fixes the induced matrix norm and the logarithmic norm.
#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    One,
    Two,
    Inf,
    Weighted(WeightedNorm),
}

impl NormKind {
    /// The three unweighted kinds.
    pub const STANDARD: [NormKind; 3] = [NormKind::One, NormKind::Two, NormKind::Inf];

    pub fn weighted(h: Matrix) -> Result<Self> {
        Ok(NormKind::Weighted(WeightedNorm::new(h)?))
    }

    /// Short label used in reports and file names.
    pub fn label(&self) -> &'static str {
        match self {
            NormKind::One => "1",
            NormKind::Two => "2",
            NormKind::Inf => "inf",
            NormKind::Weighted(_) => "H",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "one" | "l1" => Ok(NormKind::One),
            "2" | "two" | "l2" | "euclidean" => Ok(NormKind::Two),
            "inf" | "infinity" | "linf" | "max" => Ok(NormKind::Inf),
            other => Err(Error::Unknown {
                what: "norm kind",
                name: other.to_string(),
            }),
        }
    }
}

/// Eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Jacobi sweeps performed.
    pub iterations: usize,
    /// Remaining off-diagonal Frobenius mass relative to ‖S‖_F.
    pub residual: f64,
}

impl EigResult {
    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
///
/// Iterates until the off-diagonal Frobenius mass drops to `tol · ‖S‖_F`.
/// Already-diagonal input returns its diagonal untouched.
pub fn sym_eig_max(s: &Matrix, tol: f64) -> Result<EigResult> {
    let n = s.order()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("eigen tolerance must be positive"));
    }
    let scale = s.frobenius_norm();
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut a = s.clone();
    // Remove rounding-level asymmetry so rotations act on a symmetric matrix.
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let off = |a: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };
    let finish = |a: &Matrix, sweeps: usize, residual: f64| {
        let mut eigenvalues: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        eigenvalues.sort_by(f64::total_cmp);
        EigResult {
            eigenvalues,
            iterations: sweeps,
            residual,
        }
    };
    if scale == 0.0 {
        return Ok(finish(&a, 0, 0.0));
    }
    for sweep in 0..EIG_MAX_SWEEPS {
        let residual = off(&a) / scale;
        if residual <= tol {
            return Ok(finish(&a, sweep, residual));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                // Skip rotations that cannot change the diagonal in floating point.
                if sweep > 3
                    && app.abs() + 100.0 * apq.abs() == app.abs()
                    && aqq.abs() + 100.0 * apq.abs() == aqq.abs()
                {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    let residual = off(&a) / scale;
    if residual <= tol {
        Ok(finish(&a, EIG_MAX_SWEEPS, residual))
    } else {
        Err(Error::NoConvergence {
            sweeps: EIG_MAX_SWEEPS,
            residual,
        })
    }
}

fn check_vector(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("empty vector"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vector"));
    }
    Ok(())
}

/// ‖x‖ for the selected kind.
pub fn vec_norm(x: &[f64], kind: &NormKind) -> Result<f64> {
    check_vector(x)?;
    Ok(match kind {
        NormKind::One => x.iter().map(|v| v.abs()).sum(),
        NormKind::Two => euclidean(x),
        NormKind::Inf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormKind::Weighted(w) => {
            if w.dim() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: w.dim(),
                    found: x.len(),
                });
            }
            euclidean(&w.lower_transpose_times(x))
        }
    })
}

fn euclidean(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

fn column_sum_norm(a: &Matrix) -> f64 {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn row_sum_norm(a: &Matrix) -> f64 {
    (0..a.rows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn spectral_norm(a: &Matrix) -> Result<f64> {
    let ata = a.transpose().matmul(a)?;
    Ok(sym_eig_max(&ata, EIG_TOL)?.max().max(0.0).sqrt())
}

/// Operator norm induced by the vector norm `kind`.
pub fn mat_induced_norm(a: &Matrix, kind: &NormKind) -> Result<f64> {
    a.order()?;
    match kind {
        NormKind::One => Ok(column_sum_norm(a)),
        NormKind::Two => spectral_norm(a),
        NormKind::Inf => Ok(row_sum_norm(a)),
        NormKind::Weighted(w) => spectral_norm(&w.transform(a)?),
    }
}

/// Logarithmic norm μ[A] for the vector norm `kind`, by closed form.
pub fn log_norm(a: &Matrix, kind: &NormKind) -> Result<f64> {
    let n = a.order()?;
    match kind {
        NormKind::One => Ok((0..n)
            .map(|j| {
                a[(j, j)]
                    + (0..n)
                        .filter(|&i| i != j)
                        .map(|i| a[(i, j)].abs())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)),
        NormKind::Inf => Ok((0..n)
            .map(|i| {
                a[(i, i)]
                    + (0..n)
                        .filter(|&j| j != i)
                        .map(|j| a[(i, j)].abs())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)),
        NormKind::Two => Ok(0.5 * sym_eig_max(&a.symmetric_part_doubled(), EIG_TOL)?.max()),
        NormKind::Weighted(w) => log_norm(&w.transform(a)?, &NormKind::Two),
    }
}

/// Extrapolated value of the difference-quotient definition of μ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEstimate {
    pub value: f64,
    pub error: f64,
}

/// Step schedule used when the caller has no preference.
pub const DEFAULT_H_SCHEDULE: [f64; 4] = [1e-3, 5e-4, 2.5e-4, 1.25e-4];

/// μ[A] as lim_{h→0⁺} (‖I + hA‖ − 1)/h, by polynomial (Richardson/Neville)
/// extrapolation of the quotients to h = 0.
///
/// The reported error is the gap between the two highest-order extrapolants
/// plus a rounding floor proportional to ε(1 + ‖A‖)/h_min.
pub fn log_norm_limit(a: &Matrix, kind: &NormKind, h_schedule: &[f64]) -> Result<LimitEstimate> {
    let n = a.order()?;
    if h_schedule.is_empty() {
        return Err(Error::invalid("empty step schedule"));
    }
    if h_schedule.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::invalid("step schedule entries must be positive"));
    }
    if h_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("step schedule must be strictly decreasing"));
    }
    let eye = Matrix::identity(n);
    let quotients = h_schedule
        .iter()
        .map(|&h| Ok((mat_induced_norm(&eye.add(&a.scale(h))?, kind)? - 1.0) / h))
        .collect::<Result<Vec<f64>>>()?;

    let value = neville_at_zero(&quotients, h_schedule);
    let norm = mat_induced_norm(a, kind)?;
    let h_min = h_schedule[h_schedule.len() - 1];
    let rounding = 1e3 * f64::EPSILON * (1.0 + norm) / h_min;
    // With a single step the quotient differs from μ by at most h‖A‖².
    let truncation = if quotients.len() >= 2 {
        (value - neville_at_zero(&quotients[1..], &h_schedule[1..])).abs()
    } else {
        h_schedule[0] * norm * norm
    };
    Ok(LimitEstimate {
        value,
        error: truncation + rounding,
    })
}

/// Value at h = 0 of the polynomial interpolating (hᵢ, qᵢ), by Neville's scheme.
fn neville_at_zero(q: &[f64], h: &[f64]) -> f64 {
    let m = q.len();
    let mut p = q.to_vec();
    for level in 1..m {
        for i in 0..m - level {
            p[i] = (h[i] * p[i + 1] - h[i + level] * p[i]) / (h[i] - h[i + level]);
        }
    }
    p[0]
}

/// Solves AᵀH + HA = −2I for symmetric positive-definite H.
///
/// The n² unknowns are solved as one dense linear system. A singular system
/// or an indefinite solution means A is not Hurwitz.
pub fn lyapunov_solve(a: &Matrix) -> Result<Matrix> {
    let n = a.order()?;
    let m = n * n;
    // Column-major vec: unknown H_kl sits at k + l·n.
    let idx = |i: usize, j: usize| i + j * n;
    let mut k = Matrix::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            let row = idx(i, j);
            for q in 0..n {
                // (AᵀH)_ij = Σ_q A_qi H_qj
                k[(row, idx(q, j))] += a[(q, i)];
                // (HA)_ij = Σ_q H_iq A_qj
                k[(row, idx(i, q))] += a[(q, j)];
            }
        }
    }
    let mut rhs = vec![0.0; m];
    for i in 0..n {
        rhs[idx(i, i)] = -2.0;
    }
    let lu = Lu::factor(&k).map_err(|_| {
        Error::NotHurwitz("Lyapunov operator is singular (eigenvalues sum to zero)".into())
    })?;
    let v = lu.solve(&rhs)?;
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = 0.5 * (v[idx(i, j)] + v[idx(j, i)]);
        }
    }
    if h.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::NotHurwitz("Lyapunov solution is not finite".into()));
    }
    cholesky(&h)
        .map_err(|_| Error::NotHurwitz("Lyapunov solution is not positive definite".into()))?;
    let residual = lyapunov_residual(a, &h)?;
    let scale = 1.0_f64.max(a.frobenius_norm() * h.frobenius_norm());
    if residual > 1e-10 * n as f64 * scale {
        return Err(Error::Numerical(format!(
            "Lyapunov residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(h)
}

/// ‖AᵀH + HA + 2I‖_F.
pub fn lyapunov_residual(a: &Matrix, h: &Matrix) -> Result<f64> {
    let n = a.order()?;
    let r = a
        .transpose()
        .matmul(h)?
        .add(&h.matmul(a)?)?
        .add(&Matrix::identity(n).scale(2.0))?;
    Ok(r.frobenius_norm())
}

/// μ_H[A] = −1/λ_max(H) for the Lyapunov weight of a Hurwitz matrix.
pub fn mu_weighted_hurwitz(a: &Matrix) -> Result<f64> {
    let h = lyapunov_solve(a)?;
    Ok(-1.0 / sym_eig_max(&h, EIG_TOL)?.max())
}
