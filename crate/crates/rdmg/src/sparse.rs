//! Compressed-sparse-row matrices and the few dense-vector kernels the
//! solver stack needs. Deliberately minimal: assembly, transfers and
//! smoothers only require row access, matvec, transposed matvec and
//! triangular sweeps.

use std::collections::BTreeMap;
use std::io::Write;

use crate::{Error, Result};

/// Coefficient vector over the free (non-Dirichlet) vertices of one mesh level.
pub type Vector = Vec<f64>;

/// CSR matrix. Column indices are strictly increasing within each row.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Build from one sorted map of `col -> value` per row. Rows own their
    /// entries; structural zeros are kept as given.
    pub fn from_row_maps(n_cols: usize, rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let n_rows = rows.len();
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < n_cols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    /// Build from unsorted (row, col, value) triplets; duplicates are summed
    /// in triplet order.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_rows];
        for (r, c, v) in triplets {
            *rows[r].entry(c).or_insert(0.0) += v;
        }
        Self::from_row_maps(n_cols, rows)
    }

    pub fn identity(n: usize) -> Self {
        let mut rows = vec![BTreeMap::new(); n];
        for (i, row) in rows.iter_mut().enumerate() {
            row.insert(i, 1.0);
        }
        let mut a = Self::from_row_maps(n, rows);
        a.symmetric = true;
        a
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Stored value at (i, j), or 0.0 when the position is not stored.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// Mark the operator symmetric after verifying value(i,j) = value(j,i)
    /// exactly (bitwise), as assembled matrices must satisfy.
    pub fn tag_symmetric(mut self) -> Result<Self> {
        if !self.symmetry_is_exact() {
            return Err(Error::ShapeMismatch(
                "operator tagged symmetric but storage is not exactly symmetric".into(),
            ));
        }
        self.symmetric = true;
        Ok(self)
    }

    /// Exact (bitwise) symmetry check of the stored pattern and values.
    pub fn symmetry_is_exact(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if self.value(j, i).to_bits() != v.to_bits() {
                    return false;
                }
            }
        }
        true
    }

    pub fn matvec(&self, x: &[f64]) -> Vector {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    /// y = A^T x without materializing the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vector {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let xi = x[i];
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                rows[j].insert(i, v);
            }
        }
        let mut t = Self::from_row_maps(self.n_rows, rows);
        t.symmetric = self.symmetric;
        t
    }

    /// Main diagonal (0.0 where not stored).
    pub fn diagonal(&self) -> Vector {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.value(i, i))
            .collect()
    }

    /// Sparse-sparse product `self * other`.
    pub fn matmul(&self, other: &SparseOperator) -> SparseOperator {
        assert_eq!(self.n_cols, other.n_rows, "matmul shape mismatch");
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let out = &mut rows[i];
            for (&k, &v) in cols.iter().zip(vals) {
                let (bc, bv) = other.row(k);
                for (&j, &w) in bc.iter().zip(bv) {
                    *out.entry(j).or_insert(0.0) += v * w;
                }
            }
        }
        SparseOperator::from_row_maps(other.n_cols, rows)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of (self - other); the patterns may differ.
    pub fn frobenius_distance(&self, other: &SparseOperator) -> f64 {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut acc = 0.0;
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let d = match (ca.get(p), cb.get(q)) {
                    (Some(&ja), Some(&jb)) if ja == jb => {
                        let d = va[p] - vb[q];
                        p += 1;
                        q += 1;
                        d
                    }
                    (Some(&ja), Some(&jb)) if ja < jb => {
                        let d = va[p];
                        p += 1;
                        d
                    }
                    (Some(_), Some(_)) | (None, Some(_)) => {
                        let d = -vb[q];
                        q += 1;
                        d
                    }
                    (Some(_), None) => {
                        let d = va[p];
                        p += 1;
                        d
                    }
                    (None, None) => unreachable!(),
                };
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// Matrix Market coordinate output (symmetric real when tagged symmetric:
    /// lower triangle only; general otherwise). Indices are 1-based.
    pub fn write_matrix_market(&self, w: &mut impl Write) -> std::io::Result<()> {
        if self.symmetric {
            let nnz_lower = (0..self.n_rows)
                .map(|i| {
                    let (cols, _) = self.row(i);
                    cols.iter().filter(|&&j| j <= i).count()
                })
                .sum::<usize>();
            writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
            writeln!(w, "{} {} {}", self.n_rows, self.n_cols, nnz_lower)?;
            for i in 0..self.n_rows {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    if j <= i {
                        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
                    }
                }
            }
        } else {
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
            for i in 0..self.n_rows {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
                }
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// r = b - A x
pub fn residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> Vector {
    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}
