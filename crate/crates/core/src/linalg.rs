//! Dense Gaussian elimination for the small Newton systems of the power flow.

use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.n + c] = v;
    }

    /// Solves `self * x = rhs` in place with partial pivoting. Returns `None`
    /// when a pivot vanishes.
    pub fn solve_in_place(mut self, rhs: &mut [T]) -> Option<()> {
        let n = self.n;
        debug_assert_eq!(rhs.len(), n);
        for col in 0..n {
            let mut pivot = col;
            let mut best = self.get(col, col).abs();
            for r in col + 1..n {
                let v = self.get(r, col).abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if !(best > T::zero()) || !best.is_finite() {
                return None;
            }
            if pivot != col {
                for c in 0..n {
                    self.data.swap(col * n + c, pivot * n + c);
                }
                rhs.swap(col, pivot);
            }
            let diag = self.get(col, col);
            for r in col + 1..n {
                let factor = self.get(r, col) / diag;
                if factor == T::zero() {
                    continue;
                }
                for c in col..n {
                    let v = self.get(r, c) - factor * self.get(col, c);
                    self.set(r, c, v);
                }
                rhs[r] = rhs[r] - factor * rhs[col];
            }
        }
        for row in (0..n).rev() {
            let mut acc = rhs[row];
            for c in row + 1..n {
                acc = acc - self.get(row, c) * rhs[c];
            }
            rhs[row] = acc / self.get(row, row);
        }
        Some(())
    }
}
