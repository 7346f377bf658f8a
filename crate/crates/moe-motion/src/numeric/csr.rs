use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Scalar};

/// Compressed sparse row matrix.
///
/// `row_offsets` has `rows + 1` entries with `row_offsets[0] == 0`; the
/// column indices of row r live in `col_indices[row_offsets[r]..row_offsets[r+1]]`
/// and are strictly increasing within the row. Stored values are finite and
/// nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Compresses a dense matrix, treating entries with |v| <= tolerance as
    /// zero.
    pub fn from_dense(dense: &DenseMatrix<T>, tolerance: T) -> Result<Self> {
        if tolerance < T::zero() || !tolerance.is_finite() {
            return Err(Error::Config(format!(
                "csr tolerance must be finite and non-negative, got {tolerance}"
            )));
        }
        let rows = dense.rows();
        let cols = dense.cols();
        let mut row_offsets = Vec::with_capacity(rows + 1);
        row_offsets.push(0usize);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..rows {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "csr_from_dense: non-finite entry at ({r}, {c})"
                    )));
                }
                if v.abs() > tolerance {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for i in self.row_offsets[r]..self.row_offsets[r + 1] {
                out.set(r, self.col_indices[i], self.values[i]);
            }
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// out = self · x.
    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let lo = self.row_offsets[r];
            let hi = self.row_offsets[r + 1];
            let mut acc = T::zero();
            for (&c, &v) in self.col_indices[lo..hi].iter().zip(&self.values[lo..hi]) {
                acc += v * x[c];
            }
            out[r] = acc;
        }
    }

    /// Verifies the structural invariants; used by tests and when loading
    /// matrices from untrusted sources.
    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.rows + 1 {
            return Err(Error::Format(format!(
                "csr row_offsets has {} entries, expected rows + 1 = {}",
                self.row_offsets.len(),
                self.rows + 1
            )));
        }
        if self.row_offsets[0] != 0 || *self.row_offsets.last().unwrap() != self.values.len() {
            return Err(Error::Format("csr row_offsets endpoints invalid".into()));
        }
        if self.col_indices.len() != self.values.len() {
            return Err(Error::Format("csr col_indices/values length mismatch".into()));
        }
        for r in 0..self.rows {
            let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::Format(format!("csr row {r} has negative extent")));
            }
            let row_cols = &self.col_indices[lo..hi];
            for w in row_cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Format(format!(
                        "csr row {r} column indices not strictly increasing"
                    )));
                }
            }
            if let Some(&last) = row_cols.last() {
                if last >= self.cols {
                    return Err(Error::Format(format!(
                        "csr row {r} column {last} out of bounds for {} cols",
                        self.cols
                    )));
                }
            }
        }
        if !self.values.iter().all(|v| v.is_finite() && *v != T::zero()) {
            return Err(Error::Format("csr values must be finite and nonzero".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use approx::assert_relative_eq;

    fn example() -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 2.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn from_dense_layout() {
        let csr = CsrMatrix::from_dense(&example(), 0.0).unwrap();
        assert_eq!(csr.row_offsets, vec![0, 2, 2, 3]);
        assert_eq!(csr.col_indices, vec![0, 2, 1]);
        assert_eq!(csr.values, vec![1.0, 2.0, 3.0]);
        csr.validate().unwrap();
    }

    #[test]
    fn tolerance_drops_small_entries() {
        let dense = DenseMatrix::from_rows(&[vec![0.5, -1e-9], vec![1e-9, -0.5]]).unwrap();
        let csr = CsrMatrix::from_dense(&dense, 1e-8).unwrap();
        assert_eq!(csr.nnz(), 2);
        assert_eq!(csr.to_dense().as_slice(), &[0.5, 0.0, 0.0, -0.5]);
    }

    #[test]
    fn roundtrip_identity_without_subtolerance_entries() {
        let mut rng = Rng::new(31);
        for _ in 0..20 {
            let rows = 1 + rng.next_below(8) as usize;
            let cols = 1 + rng.next_below(8) as usize;
            let mut dense = DenseMatrix::<f64>::zeros(rows, cols);
            for v in dense.as_mut_slice() {
                // roughly half the entries exactly zero, the rest well above
                // any tolerance
                if rng.next_f64() < 0.5 {
                    *v = rng.uniform(0.5, 2.0);
                    if rng.next_f64() < 0.5 {
                        *v = -*v;
                    }
                }
            }
            let csr = CsrMatrix::from_dense(&dense, 0.0).unwrap();
            csr.validate().unwrap();
            assert_eq!(csr.to_dense(), dense);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = Rng::new(77);
        for _ in 0..20 {
            let rows = 1 + rng.next_below(16) as usize;
            let cols = 1 + rng.next_below(16) as usize;
            let mut dense = DenseMatrix::<f64>::zeros(rows, cols);
            for v in dense.as_mut_slice() {
                if rng.next_f64() < 0.3 {
                    *v = rng.uniform(-1.0, 1.0);
                }
            }
            let x: Vec<f64> = (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut dense_out = vec![0.0; rows];
            let mut csr_out = vec![0.0; rows];
            dense.matvec(&x, &mut dense_out);
            let csr = CsrMatrix::from_dense(&dense, 0.0).unwrap();
            csr.matvec(&x, &mut csr_out);
            for (a, b) in dense_out.iter().zip(&csr_out) {
                assert_relative_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let dense = DenseMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(CsrMatrix::from_dense(&dense, 0.0).is_err());
    }
}
