//! Dense matrices, pseudo-weight grids, weighted norms and the diagonal-weighted
//! regression that every alternating half-step reduces to.
//!
//! Everything here is a small immutable value type. Matrices reject NaN and
//! infinities at construction so that downstream iterations surface divergence
//! as a typed error instead of propagating non-finite numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};

/// Relative threshold applied to normal-equation determinants.
///
/// A system `G b = r` is declared singular when `|det G|` does not exceed
/// `SINGULAR_RTOL` times the Hadamard bound `prod_k ||G_k||` of its rows.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Dense real matrix stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// On-disk JSON layout: `{"rows": m, "cols": n, "entries": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        if repr.entries.len() != repr.rows {
            return Err(Error::Dimension {
                context: "entries",
                expected: format!("{} rows", repr.rows),
                got: format!("{} rows", repr.entries.len()),
            });
        }
        let m = Matrix::from_rows(&repr.entries)?;
        if m.cols != repr.cols {
            return Err(Error::Dimension {
                context: "entries",
                expected: format!("{} columns", repr.cols),
                got: format!("{} columns", m.cols),
            });
        }
        Ok(m)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            entries: m.to_rows(),
        }
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty);
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "matrix data",
                expected: format!("{} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::Dimension {
                    context: "matrix row",
                    expected: format!("{n} columns"),
                    got: format!("{} columns in row {i}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(m, n, data)
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let n = columns.len();
        let m = columns.first().map_or(0, |c| c.as_ref().len());
        if columns.iter().any(|c| c.as_ref().len() != m) {
            return Err(Error::Dimension {
                context: "matrix columns",
                expected: format!("columns of length {m}"),
                got: "ragged columns".into(),
            });
        }
        Self::new(m, n, (0..m * n).map(|k| columns[k % n].as_ref()[k / n]).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(
            rows,
            cols,
            (0..rows * cols).map(|k| f(k / cols, k % cols)).collect(),
        )
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// First `cols` columns of the `rows`-dimensional identity.
    pub fn identity(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for k in 0..rows.min(cols) {
            m.data[k * cols + k] = 1.0;
        }
        m
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    fn check_same_shape(&self, other: &Matrix, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                context,
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                context: "matmul",
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", other.rows),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for l in 0..k {
                let a = self.data[i * k + l];
                for j in 0..n {
                    out[i * n + j] += a * other.data[l * n + j];
                }
            }
        }
        Matrix::new(m, n, out)
    }

    /// `self * other'`, the product `A B'` of a factor pair.
    pub fn mul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension {
                context: "A*B'",
                expected: format!("{} columns", self.cols),
                got: format!("{} columns", other.cols),
            });
        }
        let (m, n) = (self.rows, other.rows);
        let out = (0..m * n)
            .map(|k| dot(self.row(k / n), other.row(k % n)))
            .collect();
        Matrix::new(m, n, out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "subtraction")?;
        Matrix::new(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |self - other|` over entries.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "comparison")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signed per-entry weights `z_ij`. The nonnegative case holds squared weights `w_ij^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct PseudoWeightGrid {
    values: Matrix,
    all_nonneg: bool,
}

impl TryFrom<Matrix> for PseudoWeightGrid {
    type Error = Error;

    fn try_from(values: Matrix) -> Result<Self> {
        Ok(Self::new(values))
    }
}

impl From<PseudoWeightGrid> for Matrix {
    fn from(z: PseudoWeightGrid) -> Self {
        z.values
    }
}

impl PseudoWeightGrid {
    pub fn new(values: Matrix) -> Self {
        let all_nonneg = values.as_slice().iter().all(|&z| z >= 0.0);
        Self { values, all_nonneg }
    }

    pub fn uniform(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Ok(Self::new(Matrix::new(rows, cols, vec![value; rows * cols])?))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Ok(Self::new(Matrix::from_rows(rows)?))
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn all_nonneg(&self) -> bool {
        self.all_nonneg
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn transpose(&self) -> Self {
        Self {
            values: self.values.transpose(),
            all_nonneg: self.all_nonneg,
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.as_slice().iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.values.as_slice().iter().map(|z| z * z).sum()
    }

    /// Entrywise sum of two grids.
    pub fn add(&self, other: &PseudoWeightGrid) -> Result<Self> {
        self.values.check_same_shape(&other.values, "weight sum")?;
        let data = self
            .values
            .as_slice()
            .iter()
            .zip(other.values.as_slice())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::new(Matrix::new(self.values.rows, self.values.cols, data)?))
    }

    pub(crate) fn require_nonneg(&self) -> Result<()> {
        let (_, n) = self.shape();
        match self.values.as_slice().iter().position(|&z| z < 0.0) {
            Some(k) => Err(Error::NegativeWeight {
                row: k / n,
                col: k % n,
                value: self.values.as_slice()[k],
            }),
            None => Ok(()),
        }
    }

    pub(crate) fn check_shape(&self, x: &Matrix, context: &'static str) -> Result<()> {
        x.check_same_shape(&self.values, context)
    }
}

/// `sum_ij z_ij (X_ij - Y_ij)^2`. Negative when `Z` has dominant negative entries.
pub fn weighted_norm_sq(x: &Matrix, z: &PseudoWeightGrid, y: &Matrix) -> Result<f64> {
    z.check_shape(x, "weights vs data")?;
    x.check_same_shape(y, "approximation vs data")?;
    Ok(x.data
        .iter()
        .zip(&y.data)
        .zip(z.values.as_slice())
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum())
}

/// Weighted root mean square error `sqrt(sum w^2 (Y - X)^2 / sum w^2)`.
pub fn rmse(x: &Matrix, w: &PseudoWeightGrid, y: &Matrix) -> Result<f64> {
    w.require_nonneg()?;
    let total = w.sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok((weighted_norm_sq(x, w, y)? / total).sqrt())
}

/// Solves `(D' diag(w) D) b = D' diag(w) t` for the `p` coefficients `b`.
///
/// With nonnegative weights this is the weighted least-squares fit of `target`
/// on the columns of `design`; with signed weights it is the stationary point
/// of the same quadratic form.
pub fn weighted_regression(design: &Matrix, target: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    weighted_regression_with(design, target, weights, SINGULAR_RTOL)
}

pub fn weighted_regression_with(
    design: &Matrix,
    target: &[f64],
    weights: &[f64],
    rtol: f64,
) -> Result<Vec<f64>> {
    let (m, p) = design.shape();
    if target.len() != m || weights.len() != m {
        return Err(Error::Dimension {
            context: "weighted regression",
            expected: format!("vectors of length {m}"),
            got: format!("target {} / weights {}", target.len(), weights.len()),
        });
    }
    if p > m {
        return Err(Error::Rank { rank: p, bound: m + 1 });
    }
    let (mut gram, mut rhs) = normal_equations(design, weights, |k| target[k]);
    let threshold = rtol * hadamard_bound(&gram, p);
    let det = solve_in_place(&mut gram, &mut rhs, p);
    if !(det.abs() > threshold) {
        return Err(Error::SingularSystem { det, threshold });
    }
    Ok(rhs)
}

/// Forms `D' diag(w) D` (row-major `p x p`) and `D' diag(w) t`.
pub(crate) fn normal_equations(
    design: &Matrix,
    weights: &[f64],
    target: impl Fn(usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let p = design.cols;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let d = design.row(k);
        let t = target(k);
        for r in 0..p {
            let wd = w * d[r];
            rhs[r] += wd * t;
            for c in r..p {
                gram[r * p + c] += wd * d[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            gram[r * p + c] = gram[c * p + r];
        }
    }
    (gram, rhs)
}

/// Product of the row norms of a square `p x p` matrix, an upper bound on `|det|`.
pub(crate) fn hadamard_bound(a: &[f64], p: usize) -> f64 {
    a.chunks(p).map(|r| dot(r, r).sqrt()).product()
}

/// Gaussian elimination with partial pivoting. Overwrites `rhs` with the
/// solution and returns the determinant. When the determinant is exactly zero
/// `rhs` is left unspecified.
pub(crate) fn solve_in_place(a: &mut [f64], rhs: &mut [f64], p: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&r, &s| a[r * p + col].abs().total_cmp(&a[s * p + col].abs()))
            .unwrap_or(col);
        if a[pivot * p + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..p {
                a.swap(pivot * p + c, col * p + c);
            }
            rhs.swap(pivot, col);
            det = -det;
        }
        let diag = a[col * p + col];
        det *= diag;
        for r in col + 1..p {
            let f = a[r * p + col] / diag;
            if f == 0.0 {
                continue;
            }
            for c in col..p {
                a[r * p + c] -= f * a[col * p + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    for r in (0..p).rev() {
        let s: f64 = (r + 1..p).map(|c| a[r * p + c] * rhs[c]).sum();
        rhs[r] = (rhs[r] - s) / a[r * p + r];
    }
    det
}

/// Determinant of a small square matrix by pivoted elimination.
pub(crate) fn determinant(a: &[f64], p: usize) -> f64 {
    let mut work = a.to_vec();
    let mut rhs = vec![0.0; p];
    solve_in_place(&mut work, &mut rhs, p)
}

/// The `m + n` Gram determinants whose nonvanishing keeps every half-step well posed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `det(B' W^i B)` for each row `i` of the data.
    pub row_dets: Vec<f64>,
    /// `det(A' W_j A)` for each column `j` of the data.
    pub col_dets: Vec<f64>,
    pub min_abs_det: f64,
    pub pass: bool,
    /// First failing system, if any.
    pub failing: Option<(Axis, usize)>,
}

pub fn condition_report(a: &Matrix, b: &Matrix, z: &PseudoWeightGrid) -> Result<ConditionReport> {
    condition_report_with(a, b, z, SINGULAR_RTOL)
}

pub fn condition_report_with(
    a: &Matrix,
    b: &Matrix,
    z: &PseudoWeightGrid,
    rtol: f64,
) -> Result<ConditionReport> {
    let (m, n) = z.shape();
    if a.rows() != m || b.rows() != n || a.cols() != b.cols() {
        return Err(Error::Dimension {
            context: "condition report",
            expected: format!("A {m}xp, B {n}xp"),
            got: format!("A {}x{}, B {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        });
    }
    let p = a.cols();
    let mut failing = None;
    let mut gram_det = |design: &Matrix, weights: Vec<f64>, axis: Axis, index: usize| {
        let (gram, _) = normal_equations(design, &weights, |_| 0.0);
        let det = determinant(&gram, p);
        if failing.is_none() && !(det.abs() > rtol * hadamard_bound(&gram, p)) {
            failing = Some((axis, index));
        }
        det
    };
    let row_dets: Vec<f64> = (0..m)
        .map(|i| gram_det(b, z.values().row(i).to_vec(), Axis::Row, i))
        .collect();
    let col_dets: Vec<f64> = (0..n)
        .map(|j| gram_det(a, z.values().column(j), Axis::Column, j))
        .collect();
    let min_abs_det = row_dets
        .iter()
        .chain(&col_dets)
        .fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
    Ok(ConditionReport {
        row_dets,
        col_dets,
        min_abs_det,
        pass: failing.is_none(),
        failing,
    })
}

/// Best unweighted rank-`p` approximation (Eckart–Young) from a full SVD.
pub fn truncated_svd(x: &Matrix, p: usize) -> Result<Matrix> {
    let (m, n) = x.shape();
    let bound = m.min(n);
    if p == 0 || p >= bound {
        return Err(Error::Rank { rank: p, bound });
    }
    let dm = nalgebra::DMatrix::from_row_slice(m, n, x.as_slice());
    let svd = dm.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Matrix::from_fn(m, n, |i, j| {
        order[..p]
            .iter()
            .map(|&k| u[(i, k)] * svd.singular_values[k] * vt[(k, j)])
            .sum()
    })
}
