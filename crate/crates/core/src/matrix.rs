//! Dense row-major matrices and the handful of BLAS-like kernels the
//! trainers and solvers need.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for v in self.row(i).iter().take(8) {
                write!(f, "{v:>12.5e} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Copy)]
enum Op {
    N,
    T,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "DenseMatrix::new",
                format!("{} entries for {rows}x{cols}", rows * cols),
                format!("{} entries", data.len()),
            ));
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(shape_err(
                    "DenseMatrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// First non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / self.cols, k % self.cols))
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.find_non_finite() {
            Some((row, col)) => Err(Error::NonFinite { row, col }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn scale_mut(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { data, ..*self })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { data, ..*self })
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        frobenius_norm_sq(self)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    /// Squared Euclidean norm of every column.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (acc, v) in out.iter_mut().zip(row) {
                *acc += v * v;
            }
        }
        out
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(shape_err(
                "hstack",
                format!("{} rows", self.rows),
                format!("{} rows", other.rows),
            ));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Copies the listed columns, in order, into a new `rows x idx.len()` matrix.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Self {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        let idx: Vec<usize> = (0..k.min(self.cols)).collect();
        self.select_columns(&idx)
    }

    /// Multiplies column `j` by `factors[j]`.
    pub fn scale_columns(&self, factors: &[f64]) -> Self {
        debug_assert_eq!(factors.len(), self.cols);
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols.max(1)) {
            for (v, f) in row.iter_mut().zip(factors) {
                *v *= f;
            }
        }
        out
    }

    /// `self * other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        gemm_new(self, Op::N, other, Op::N, "matmul")
    }

    /// `selfᵀ * other`
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        gemm_new(self, Op::T, other, Op::N, "matmul_tn")
    }

    /// `self * otherᵀ`
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        gemm_new(self, Op::N, other, Op::T, "matmul_nt")
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Reads a header-free CSV of reals, one matrix row per line.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(path, e))?;
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            let expected = *cols.get_or_insert(rec.len());
            if rec.len() != expected {
                return Err(Error::RaggedRow {
                    path: path.to_path_buf(),
                    row: i,
                    expected,
                    got: rec.len(),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("row {i}, column {j}: cannot parse {field:?} as a real"),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                data.push(v);
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            msg: "empty matrix file".into(),
        })?;
        Self::new(rows, cols, data)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Sum of squared entries.
pub fn frobenius_norm_sq(a: &DenseMatrix) -> f64 {
    a.data.iter().map(|v| v * v).sum()
}

fn op_dims(m: &DenseMatrix, op: Op) -> (usize, usize, isize, isize) {
    // (rows, cols, row stride, col stride) of op(m)
    match op {
        Op::N => (m.rows, m.cols, m.cols as isize, 1),
        Op::T => (m.cols, m.rows, 1, m.cols as isize),
    }
}

fn gemm_new(a: &DenseMatrix, oa: Op, b: &DenseMatrix, ob: Op, name: &'static str) -> Result<DenseMatrix> {
    let (m, k, rsa, csa) = op_dims(a, oa);
    let (k2, n, rsb, csb) = op_dims(b, ob);
    if k != k2 {
        return Err(shape_err(name, format!("inner dimension {k}"), format!("{k2}")));
    }
    let mut c = DenseMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }
    // SAFETY: strides describe the row-major buffers of `a`, `b` and `c`,
    // whose lengths are exactly rows * cols.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}
