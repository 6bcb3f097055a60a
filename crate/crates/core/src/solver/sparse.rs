//! Compressed sparse row matrices sized for the problems this crate builds:
//! day-long dispatch programs (a few thousand variables) and per-round prox
//! subproblems (tens of variables). Only the operations the splitting solver
//! needs are provided.

use super::SolveError;

/// Row-major compressed sparse matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Matrix with no stored entries.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicate coordinates are
    /// summed, structural zeros are kept out.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SolveError> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(SolveError::Shape(format!(
                    "triplet ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(SolveError::NonFinite(format!(
                    "non-finite matrix entry at ({r}, {c})"
                )));
            }
            sorted.push((r, c, v));
        }
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            if indptr[r + 1] > 0 && *indices.last().unwrap() == c && {
                // same row as the previous entry?
                let prev_row_end = indptr[r + 1];
                prev_row_end == indices.len()
            } {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] = indices.len();
            }
        }
        // Fill gaps for empty rows (indptr entries left at zero).
        for r in 1..=rows {
            if indptr[r] < indptr[r - 1] {
                indptr[r] = indptr[r - 1];
            }
        }
        // Drop entries that cancelled to exact zero.
        let mut out = SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        };
        out.prune();
        Ok(out)
    }

    /// Builds from a dense row-major slice, dropping exact zeros.
    pub fn from_dense(rows: usize, cols: usize, dense: &[f64]) -> Result<Self, SolveError> {
        if dense.len() != rows * cols {
            return Err(SolveError::Shape(format!(
                "dense data of length {} for a {rows}x{cols} matrix",
                dense.len()
            )));
        }
        let mut triplets = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = dense[r * cols + c];
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(rows, cols, &triplets)
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            out[r] = acc;
        }
    }

    /// `out += A^T y`.
    pub fn matvec_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                out[*c] += v * yr;
            }
        }
    }

    /// Infinity norms of each column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.cols];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                norms[*c] = norms[*c].max(v.abs());
            }
        }
        norms
    }

    /// Infinity norms of each row.
    pub fn row_inf_norms(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).1.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }

    /// Scales row `r` by `d[r]` in place.
    pub fn scale_rows(&mut self, d: &[f64]) {
        debug_assert_eq!(d.len(), self.rows);
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                self.values[k] *= d[r];
            }
        }
    }

    /// Scales column `c` by `d[c]` in place.
    pub fn scale_cols(&mut self, d: &[f64]) {
        debug_assert_eq!(d.len(), self.cols);
        for k in 0..self.values.len() {
            self.values[k] *= d[self.indices[k]];
        }
    }

    /// Maximum asymmetry `max |A_ij - A_ji|` for a square matrix.
    pub fn asymmetry(&self) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c > r {
                    worst = worst.max((v - self.get(*c, r)).abs());
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = SparseMatrix::from_triplets(
            2,
            3,
            &[(0, 1, 2.0), (0, 1, 3.0), (1, 0, 4.0), (1, 2, 1.0), (1, 2, -1.0)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 5.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(1, 2), 0.0);
    }

    #[test]
    fn matvec_and_transpose() {
        let a = SparseMatrix::from_dense(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]).unwrap();
        let mut out = vec![0.0; 2];
        a.matvec(&[1.0, 1.0, 1.0], &mut out);
        assert_eq!(out, vec![3.0, 3.0]);
        let mut back = vec![0.0; 3];
        a.matvec_transpose_add(&[1.0, 2.0], &mut back);
        assert_eq!(back, vec![1.0, 6.0, 2.0]);
    }

    #[test]
    fn norms_and_scaling() {
        let mut a = SparseMatrix::from_dense(2, 2, &[1.0, -4.0, 2.0, 0.0]).unwrap();
        assert_eq!(a.col_inf_norms(), vec![2.0, 4.0]);
        assert_eq!(a.row_inf_norms(), vec![4.0, 2.0]);
        a.scale_rows(&[2.0, 0.5]);
        a.scale_cols(&[1.0, 0.25]);
        assert_eq!(a.get(0, 1), -2.0);
        assert_eq!(a.get(1, 0), 1.0);
    }

    #[test]
    fn asymmetry_detects_mismatch() {
        let sym = SparseMatrix::from_dense(2, 2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(sym.asymmetry(), 0.0);
        let skew = SparseMatrix::from_dense(2, 2, &[2.0, 1.0, 1.5, 2.0]).unwrap();
        assert!((skew.asymmetry() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SparseMatrix::from_triplets(1, 1, &[(1, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(1, 1, &[(0, 0, f64::NAN)]).is_err());
        assert!(SparseMatrix::from_dense(2, 2, &[1.0]).is_err());
    }
}
