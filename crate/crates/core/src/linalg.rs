//! Dense real-matrix primitives used by the completion pipeline.
//!
//! Every rank decision in the crate goes through [`numerical_rank`], which
//! counts singular values above a relative threshold. Exact arithmetic would
//! make these tests crisp; in floating point the threshold is what turns
//! "probability one" statements into something testable.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Largest ambient dimension accepted by [`sparsity_number`].
pub const MAX_EXHAUSTIVE_DIM: usize = 22;

/// Entries of a unit-scaled circuit vector below this fraction of its largest
/// entry are treated as structural zeros (and then confirmed by a rank test).
const CIRCUIT_ZERO_REL: f64 = 1e-7;

/// Row-major dense matrix of `f64`.
///
/// Zero-sized shapes are allowed so that index-set selections such as
/// `N[R, C]` with `R = C = {}` stay total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
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
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    /// Builds a single-column matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
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

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Induced submatrix on the given (ordered) row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: rows.len(),
            cols: cols.len(),
            data,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let cols: Vec<usize> = (0..self.cols).collect();
        self.select(rows, &cols)
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let rows: Vec<usize> = (0..self.rows).collect();
        self.select(&rows, cols)
    }

    pub fn without_row(&self, i: usize) -> Self {
        let rows: Vec<usize> = (0..self.rows).filter(|&k| k != i).collect();
        self.select_rows(&rows)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Returns `[self | column]`.
    pub fn append_column(&self, column: &[f64]) -> Result<Self> {
        if column.len() != self.rows {
            return Err(Error::InvalidInput(format!(
                "column of length {} cannot be appended to {} rows",
                column.len(),
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for (i, &c) in column.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(c);
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols + 1,
            data,
        })
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::InvalidInput(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }
}

/// Relative singular-value cutoff for rank decisions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTolerance(f64);

impl RankTolerance {
    pub const DEFAULT: f64 = 1e-9;

    pub fn new(rel_threshold: f64) -> Result<Self> {
        if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rank tolerance must lie in (0, 1), got {rel_threshold}"
            )));
        }
        Ok(Self(rel_threshold))
    }

    pub fn rel_threshold(self) -> f64 {
        self.0
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

fn ensure_finite(m: &DenseMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Number of singular values above `tol × σ_max`. Empty and all-zero
/// matrices have rank 0.
pub fn numerical_rank(m: &DenseMatrix, tol: RankTolerance) -> Result<usize> {
    ensure_finite(m)?;
    if m.is_empty() || m.max_abs() == 0.0 {
        return Ok(0);
    }
    let sv = m.to_nalgebra().singular_values();
    let largest = sv.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol.rel_threshold() * largest;
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

pub fn is_invertible(m: &DenseMatrix, tol: RankTolerance) -> Result<bool> {
    if m.rows() != m.cols() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    Ok(numerical_rank(m, tol)? == m.rows())
}

/// Minimises `‖a·x − b‖₂`; `a` must have full column rank.
pub fn solve_least_squares(a: &DenseMatrix, b: &[f64], tol: RankTolerance) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            a.rows()
        )));
    }
    ensure_finite(a)?;
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("right-hand side has non-finite entries".into()));
    }
    if a.cols() == 0 {
        return Ok(Vec::new());
    }
    let rank = numerical_rank(a, tol)?;
    if rank < a.cols() {
        return Err(Error::Degenerate(format!(
            "coefficient matrix has rank {rank} < {} columns",
            a.cols()
        )));
    }
    let rhs = DVector::from_column_slice(b);
    let x = if a.rows() == a.cols() {
        a.to_nalgebra()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("LU factorisation is singular".into()))?
    } else {
        a.to_nalgebra()
            .svd(true, true)
            .solve(&rhs, 0.0)
            .map_err(|e| Error::Degenerate(e.to_string()))?
    };
    Ok(x.iter().copied().collect())
}

/// Whether the standard basis vector `e_i` lies in the column space of `m`.
///
/// Tested as a rank drop on deleting row `i`: any column combination that
/// vanishes on the other rows but not on row `i` is a multiple of `e_i`.
pub fn ei_in_colspace(m: &DenseMatrix, i: usize, tol: RankTolerance) -> Result<bool> {
    if i >= m.rows() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: m.rows(),
        });
    }
    let full = numerical_rank(m, tol)?;
    let reduced = numerical_rank(&m.without_row(i), tol)?;
    Ok(reduced < full)
}

/// Greedy left-to-right selection of linearly independent columns.
///
/// Ties are broken by lowest column index; the returned indices are increasing.
pub fn column_basis(m: &DenseMatrix, tol: RankTolerance) -> Result<Vec<usize>> {
    ensure_finite(m)?;
    let mut chosen: Vec<usize> = Vec::new();
    for j in 0..m.cols() {
        chosen.push(j);
        if numerical_rank(&m.select_cols(&chosen), tol)? < chosen.len() {
            chosen.pop();
        }
        if chosen.len() == m.rows() {
            break;
        }
    }
    Ok(chosen)
}

/// A set of linearly independent vectors in `R^ambient_dim`, stored as the
/// columns of an `ambient_dim × dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    vectors: DenseMatrix,
}

impl SubspaceBasis {
    /// Wraps `vectors` (columns) after checking they are independent.
    pub fn new(vectors: DenseMatrix, tol: RankTolerance) -> Result<Self> {
        if vectors.rows() == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        if numerical_rank(&vectors, tol)? != vectors.cols() {
            return Err(Error::InvalidInput(
                "basis vectors are linearly dependent".into(),
            ));
        }
        Ok(Self { vectors })
    }

    /// Basis of the column space of `m`, chosen among its own columns.
    pub fn column_space(m: &DenseMatrix, tol: RankTolerance) -> Result<Self> {
        let cols = column_basis(m, tol)?;
        Self::new(m.select_cols(&cols), tol)
    }

    /// Basis of the row space of `m`, as vectors in `R^cols`.
    pub fn row_space(m: &DenseMatrix, tol: RankTolerance) -> Result<Self> {
        Self::column_space(&m.transpose(), tol)
    }

    pub fn from_vectors<V: AsRef<[f64]>>(vectors: &[V], tol: RankTolerance) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(vectors)?.transpose(), tol)
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.vectors
    }
}

/// Index of a standard basis vector contained in the subspace, if any.
///
/// Equivalent to `sparsity_number(basis) == 1` but without a dimension cap.
pub fn standard_basis_member(basis: &SubspaceBasis, tol: RankTolerance) -> Result<Option<usize>> {
    for i in 0..basis.ambient_dim() {
        if ei_in_colspace(basis.matrix(), i, tol)? {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Exact sparsity number: the fewest nonzero coordinates of any nonzero
/// vector in the span.
///
/// A minimum-support vector vanishes on some `dim − 1` rows whose restriction
/// of the basis has rank `dim − 1`; conversely every such row set pins down a
/// vector (up to scale). Enumerating those row sets is exhaustive and costs
/// `C(n, dim − 1)` small SVDs rather than `2^n` rank tests.
pub fn sparsity_number(basis: &SubspaceBasis, tol: RankTolerance) -> Result<usize> {
    sparsity_number_with(basis, tol, Execution::default())
}

pub fn sparsity_number_with(
    basis: &SubspaceBasis,
    tol: RankTolerance,
    exec: Execution,
) -> Result<usize> {
    let n = basis.ambient_dim();
    let d = basis.dim();
    if d == 0 {
        return Err(Error::InvalidInput("zero-dimensional span".into()));
    }
    if n > MAX_EXHAUSTIVE_DIM {
        return Err(Error::Capacity {
            dim: n,
            max: MAX_EXHAUSTIVE_DIM,
        });
    }
    // Orthonormal columns keep the circuit vectors well scaled.
    let q = DenseMatrix::from_nalgebra(&basis.matrix().to_nalgebra().qr().q());
    let q = q.select_cols(&(0..d).collect::<Vec<_>>());

    if d == 1 {
        return Ok(support_size(&q.column(0)));
    }
    // Split the enumeration on the smallest zero-row index.
    let per_first = par::map_indexed(n, exec, |first| -> Result<usize> {
        let mut best = usize::MAX;
        for rest in (first + 1..n).combinations(d - 2) {
            let mut zero_rows = Vec::with_capacity(d - 1);
            zero_rows.push(first);
            zero_rows.extend(rest);
            if let Some(k) = circuit_support(&q, &zero_rows, tol)? {
                best = best.min(k);
                if best == 1 {
                    break;
                }
            }
        }
        Ok(best)
    });
    let mut best = usize::MAX;
    for r in per_first {
        best = best.min(r?);
    }
    debug_assert!(best <= n - d + 1);
    Ok(best)
}

/// `ambient_dim − sparsity_number`.
pub fn nonsparsity_number(basis: &SubspaceBasis, tol: RankTolerance) -> Result<usize> {
    Ok(basis.ambient_dim() - sparsity_number(basis, tol)?)
}

fn support_size(x: &[f64]) -> usize {
    let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    x.iter()
        .filter(|v| v.abs() > CIRCUIT_ZERO_REL * scale)
        .count()
}

/// Support size of the vector in span(q) vanishing on `zero_rows`, when that
/// vector is unique up to scale.
fn circuit_support(q: &DenseMatrix, zero_rows: &[usize], tol: RankTolerance) -> Result<Option<usize>> {
    let d = q.cols();
    let sub = q.select_rows(zero_rows);
    if numerical_rank(&sub, tol)? != d - 1 {
        return Ok(None);
    }
    // Pad to square so the SVD returns a full right-singular basis.
    let padded = sub.to_nalgebra().insert_row(d - 1, 0.0);
    let svd = padded.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("SVD did not return V^T".into()))?;
    let (null_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty singular values");
    let coeffs: Vec<f64> = (0..d).map(|k| v_t[(null_idx, k)]).collect();
    let x: Vec<f64> = (0..q.rows())
        .map(|i| q.row(i).iter().zip(&coeffs).map(|(a, c)| a * c).sum())
        .collect();
    let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let support: Vec<usize> = (0..x.len())
        .filter(|&i| x[i].abs() > CIRCUIT_ZERO_REL * scale)
        .collect();
    // Confirm: the basis restricted to the complement of the support must be
    // rank deficient, otherwise the small entries were not structural zeros.
    let zeros: Vec<usize> = (0..x.len()).filter(|i| !support.contains(i)).collect();
    if numerical_rank(&q.select_rows(&zeros), tol)? < d {
        Ok(Some(support.len()))
    } else {
        Ok(None)
    }
}
