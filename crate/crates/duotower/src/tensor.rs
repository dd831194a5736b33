use parabench_core::Scalar;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), cols: self.cols, data }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.to_f64().expect("finite"))).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64().expect("finite")).collect()
    }

    /// `self · wᵀ` for `self: n×k`, `w: m×k`.
    pub fn matmul_t(&self, w: &[T], m: usize) -> Self {
        let k = self.cols;
        debug_assert_eq!(w.len(), m * k);
        let mut out = Self::zeros(self.rows, m);
        for i in 0..self.rows {
            let x = self.row(i);
            let o = out.row_mut(i);
            for (j, oj) in o.iter_mut().enumerate() {
                *oj = dot(x, &w[j * k..(j + 1) * k]);
            }
        }
        out
    }

    /// `self · w` for `self: n×m`, `w: m×k`.
    pub fn matmul(&self, w: &[T], k: usize) -> Self {
        let m = self.cols;
        debug_assert_eq!(w.len(), m * k);
        let mut out = Self::zeros(self.rows, k);
        for i in 0..self.rows {
            let o = &mut out.data[i * k..(i + 1) * k];
            for (j, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                axpy(a, &w[j * k..(j + 1) * k], o);
            }
        }
        out
    }

    /// Accumulates `selfᵀ · x` into `acc` (`self: n×m`, `x: n×k`, `acc: m×k`).
    pub fn add_tmatmul_into(&self, x: &Self, acc: &mut [T]) {
        debug_assert_eq!(self.rows, x.rows);
        let k = x.cols;
        debug_assert_eq!(acc.len(), self.cols * k);
        for i in 0..self.rows {
            let xi = x.row(i);
            for (j, &g) in self.row(i).iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                axpy(g, xi, &mut acc[j * k..(j + 1) * k]);
            }
        }
    }

    /// Accumulates column sums into `acc`.
    pub fn add_col_sums_into(&self, acc: &mut [T]) {
        for i in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(i)) {
                *a = *a + v;
            }
        }
    }

    pub fn add_row_vector(&mut self, b: &[T]) {
        for i in 0..self.rows {
            for (v, &bj) in self.row_mut(i).iter_mut().zip(b) {
                *v = *v + bj;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}
