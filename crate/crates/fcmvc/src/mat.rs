use crate::error::{Error, Result};

/// Dense row-major f64 matrix.
///
/// This is the only numeric container used by the engine. Rows are contiguous,
/// which matches the access pattern of the solver: coefficient matrices are
/// built row-by-row through scatter-adds keyed by registry position.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Square identity.
    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds from a row-major buffer, rejecting length mismatches and
    /// non-finite entries. Use this for anything that crosses an external
    /// boundary (files, checkpoints, caller-supplied batches).
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "matrix buffer holds {} values, expected {}x{} = {}",
                data.len(),
                rows,
                cols,
                rows * cols
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite entry at flat index {bad} ({}, {})",
                bad / cols.max(1),
                bad % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds entrywise from a closure. Trusted path: no finiteness check.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Contiguous view of one row.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert!(r < self.rows);
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        debug_assert!(r < self.rows);
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Flat row-major buffer.
    /// Mutable views of two distinct rows at once.
    pub fn two_rows_mut(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert!(a != b && a < self.rows && b < self.rows);
        let (lo, hi) = (a.min(b), a.max(b));
        let (head, tail) = self.data.split_at_mut(hi * self.cols);
        let lo_row = &mut head[lo * self.cols..(lo + 1) * self.cols];
        let hi_row = &mut tail[..self.cols];
        if a < b {
            (lo_row, hi_row)
        } else {
            (hi_row, lo_row)
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// self * other. Inner dimensions must agree; a mismatch is a caller bug.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for (l, &a) in arow.iter().enumerate() {
                let brow = &other.data[l * other.cols..(l + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self^T * other without materializing the transpose.
    pub fn tr_mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.rows, other.rows,
            "tr_mul shape mismatch: ({}x{})^T * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.cols, other.cols);
        for l in 0..self.rows {
            let arow = self.row(l);
            let brow = other.row(l);
            for (i, &a) in arow.iter().enumerate() {
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Entrywise sum; shapes must match.
    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch in add"
        );
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Sum of squared entries.
    pub fn sumsq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.sumsq().sqrt()
    }

    /// Largest absolute entrywise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// || self * self^T - I ||_F, the row-orthonormality defect.
    pub fn row_gram_defect(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            let ri = self.row(i);
            for j in 0..self.rows {
                let rj = self.row(j);
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                acc += (dot - target) * (dot - target);
            }
        }
        acc.sqrt()
    }

    /// || self^T * self - I ||_F, the column-orthonormality defect.
    pub fn col_gram_defect(&self) -> f64 {
        let gram = self.tr_mul(self);
        let mut acc = 0.0;
        for i in 0..self.cols {
            for j in 0..self.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = gram.get(i, j) - target;
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        let err = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.kind(), "validation");
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            let err = Matrix::from_vec(1, 2, vec![0.0, bad]).unwrap_err();
            assert_eq!(err.kind(), "validation");
        }
    }

    #[test]
    fn mul_matches_hand_computed_product() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = a.mul(&b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn identity_is_neutral() {
        let a = Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.0, 4.0, 0.5, -1.0]).unwrap();
        assert_eq!(Matrix::identity(2).mul(&a), a);
        assert_eq!(a.mul(&Matrix::identity(3)), a);
    }

    #[test]
    fn tr_mul_agrees_with_explicit_transpose() {
        let a = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.37 - 1.0);
        let b = Matrix::from_fn(4, 2, |r, c| (r * 2 + c) as f64 * -0.21 + 0.5);
        let direct = a.tr_mul(&b);
        let via_transpose = a.transpose().mul(&b);
        assert!(direct.max_abs_diff(&via_transpose) < 1e-15);
    }

    #[test]
    fn transpose_round_trips() {
        let a = Matrix::from_fn(3, 5, |r, c| (r as f64) * 10.0 + c as f64);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn two_rows_mut_borrows_either_order() {
        let mut a = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        let (r2, r0) = a.two_rows_mut(2, 0);
        assert_eq!(r2, &[4.0, 5.0]);
        assert_eq!(r0, &[0.0, 1.0]);
        r0[1] = 9.0;
        r2[0] = -1.0;
        assert_eq!(a.data(), &[0.0, 9.0, 2.0, 3.0, -1.0, 5.0]);
    }

    #[test]
    fn frobenius_norm_of_known_matrix() {
        // sqrt(1 + 4 + 9 + 16) = sqrt(30)
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((a.frob_norm() - 30.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gram_defects_vanish_on_orthonormal_rows() {
        // Rows of a permutation matrix are orthonormal.
        let p = Matrix::from_vec(2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.row_gram_defect(), 0.0);
        // Its transpose has orthonormal columns.
        assert_eq!(p.transpose().col_gram_defect(), 0.0);
    }
}
