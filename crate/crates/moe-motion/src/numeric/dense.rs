use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ops;
use crate::numeric::Scalar;

/// Row-major dense matrix.
///
/// `data[r * cols + c]` holds entry (r, c). Rows are contiguous so matvec and
/// the backward-pass outer products run as straight slice loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::from_vec",
                format!("{rows}x{cols} = {} elements", rows * cols),
                format!("{} elements", data.len()),
            ));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows_in: &[Vec<T>]) -> Result<Self> {
        let rows = rows_in.len();
        let cols = rows_in.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for (i, r) in rows_in.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "DenseMatrix::from_rows",
                    format!("row of {cols} elements"),
                    format!("row {i} of {} elements", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix { rows, cols, data })
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// self += a * other (same shape).
    pub fn axpy_from(&mut self, a: T, other: &Self) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        ops::axpy(&mut self.data, a, &other.data);
    }

    /// out = self · x. `x` has `cols` entries, `out` has `rows`.
    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = ops::dot(self.row(r), x);
        }
    }

    /// out = self · x + b, fused.
    pub fn matvec_bias(&self, x: &[T], b: &[T], out: &mut [T]) {
        debug_assert_eq!(b.len(), self.rows);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            out[r] = b[r] + ops::dot(self.row(r), x);
        }
    }

    /// out += selfᵀ · y, accumulated row by row (cache-friendly for
    /// row-major storage).
    pub fn matvec_transpose_accum(&self, y: &[T], out: &mut [T]) {
        self.matvec_transpose_accum_scaled(y, T::one(), out);
    }

    /// out += s · selfᵀ · y.
    pub fn matvec_transpose_accum_scaled(&self, y: &[T], s: T, out: &mut [T]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            let a = s * yr;
            if a != T::zero() {
                ops::axpy(out, a, self.row(r));
            }
        }
    }

    /// self += a * (y ⊗ x); the gradient outer product of a linear layer.
    pub fn outer_accum(&mut self, a: T, y: &[T], x: &[T]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            ops::axpy(self.row_mut(r), a * yr, x);
        }
    }

    /// Plain O(n·m·k) product, used by tests and small utilities only.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "DenseMatrix::matmul",
                format!("{}x{} · {}xN", self.rows, self.cols, self.cols),
                format!("{}x{} · {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a != T::zero() {
                    ops::axpy(&mut out.data[r * other.cols..(r + 1) * other.cols], a, other.row(k));
                }
            }
        }
        Ok(out)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != T::zero()).count()
    }

    pub fn all_finite(&self) -> bool {
        ops::all_finite(&self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use approx::assert_relative_eq;

    #[test]
    fn matmul_hand_case() {
        // [[1,2],[3,4]] · [[5],[6]] = [[17],[39]]
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = DenseMatrix::<f64>::zeros(2, 3);
        let b = DenseMatrix::<f64>::zeros(2, 2);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3"), "{err}");
        assert!(err.contains("2x2"), "{err}");
    }

    #[test]
    fn matvec_bias_matches_matmul() {
        let w = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]).unwrap();
        let x = [2.0, 1.0, -1.0];
        let b = [10.0, -10.0];
        let mut out = [0.0; 2];
        w.matvec_bias(&x, &b, &mut out);
        assert_eq!(out, [2.0 - 2.0 - 0.5 + 10.0, 3.0 - 1.0 - 10.0]);
    }

    #[test]
    fn transpose_accum_matches_explicit_transpose() {
        let mut rng = Rng::new(11);
        let mut w = DenseMatrix::<f64>::zeros(4, 3);
        rng.fill_uniform(w.as_mut_slice(), -1.0, 1.0);
        let y = [0.3, -0.7, 1.1, 0.2];
        let mut out = [0.0; 3];
        w.matvec_transpose_accum(&y, &mut out);
        for c in 0..3 {
            let expect: f64 = (0..4).map(|r| w.get(r, c) * y[r]).sum();
            assert_relative_eq!(out[c], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn outer_accum_matches_definition() {
        let mut g = DenseMatrix::<f64>::zeros(2, 3);
        g.outer_accum(2.0, &[1.0, -1.0], &[0.5, 1.0, 2.0]);
        assert_eq!(g.as_slice(), &[1.0, 2.0, 4.0, -1.0, -2.0, -4.0]);
    }

    #[test]
    fn matmul_associative_on_random_f64() {
        let mut rng = Rng::new(99);
        for _ in 0..20 {
            let (n, m, k, l) = (
                1 + rng.next_below(5) as usize,
                1 + rng.next_below(5) as usize,
                1 + rng.next_below(5) as usize,
                1 + rng.next_below(5) as usize,
            );
            let mut a = DenseMatrix::<f64>::zeros(n, m);
            let mut b = DenseMatrix::<f64>::zeros(m, k);
            let mut c = DenseMatrix::<f64>::zeros(k, l);
            rng.fill_uniform(a.as_mut_slice(), -2.0, 2.0);
            rng.fill_uniform(b.as_mut_slice(), -2.0, 2.0);
            rng.fill_uniform(c.as_mut_slice(), -2.0, 2.0);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                assert_relative_eq!(x, y, epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }
}
