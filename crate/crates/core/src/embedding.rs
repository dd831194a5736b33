use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a row norm from 1 for a matrix flagged normalized.
pub const NORM_TOLERANCE: f64 = 1e-5;

/// Rows below this norm cannot be normalized.
const ZERO_NORM: f64 = 1e-12;

/// Dense row-major `rows x dim` matrix of 32-bit embeddings.
///
/// Immutable once built; every constructor checks the shape and rejects
/// non-finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if data.len() != rows * dim {
            return Err(Error::ShapeMismatch { rows, dim, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: pos / dim, col: pos % dim });
        }
        Ok(Self { rows, dim, data, normalized: false })
    }

    /// Builds a matrix from equally sized rows. `dim` is required so that an
    /// empty row set still has a shape.
    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimMismatch { expected: dim, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    /// Converts double-precision rows, rounding to the storage type.
    pub fn from_f64(rows: usize, dim: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, dim, data.iter().map(|&v| v as f32).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        norm64(self.row(i))
    }

    /// Sets the normalized flag after checking every row norm.
    pub fn mark_normalized(mut self) -> Result<Self> {
        for i in 0..self.rows {
            let norm = self.row_norm(i);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized { row: i, norm });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), dim: self.dim, data, normalized: self.normalized }
    }
}

#[inline]
pub(crate) fn norm64(row: &[f32]) -> f64 {
    row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

/// Scales every row to unit L2 norm. Norms are accumulated in f64.
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for (i, row) in m.iter_rows().enumerate() {
        let norm = norm64(row);
        if norm < ZERO_NORM {
            return Err(Error::ZeroVector { row: i });
        }
        data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
    }
    Ok(EmbeddingMatrix { rows: m.rows, dim: m.dim, data, normalized: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_four_five() {
        let m = EmbeddingMatrix::from_rows(2, &[[3.0f32, 4.0]]).unwrap();
        let n = l2_normalize(&m).unwrap();
        assert!(n.is_normalized());
        assert!((n.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((n.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn unit_row_is_fixed() {
        let m = EmbeddingMatrix::from_rows(2, &[[1.0f32, 0.0]]).unwrap();
        assert_eq!(l2_normalize(&m).unwrap().row(0), &[1.0, 0.0]);
    }

    #[test]
    fn zero_row_rejected() {
        let m = EmbeddingMatrix::from_rows(2, &[[1.0f32, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(l2_normalize(&m), Err(Error::ZeroVector { row: 1 })));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(EmbeddingMatrix::new(1, 0, vec![]), Err(Error::ZeroDim)));
        assert!(matches!(
            EmbeddingMatrix::new(2, 2, vec![0.0; 3]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            EmbeddingMatrix::new(2, 2, vec![0.0, 1.0, f32::NAN, 0.0]),
            Err(Error::NonFiniteValue { row: 1, col: 0 })
        ));
        assert!(EmbeddingMatrix::new(0, 4, vec![]).unwrap().is_empty());
    }

    #[test]
    fn mark_normalized_checks_norms() {
        let m = EmbeddingMatrix::from_rows(2, &[[3.0f32, 4.0]]).unwrap();
        assert!(matches!(m.clone().mark_normalized(), Err(Error::NotNormalized { row: 0, .. })));
        assert!(l2_normalize(&m).unwrap().mark_normalized().is_ok());
    }

    fn rows_strategy() -> impl Strategy<Value = (usize, Vec<f32>)> {
        (1usize..8, 1usize..6).prop_flat_map(|(d, n)| {
            (Just(d), prop::collection::vec(-100.0f32..100.0, d * n))
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent((d, data) in rows_strategy()) {
            let m = EmbeddingMatrix::new(data.len() / d, d, data).unwrap();
            prop_assume!((0..m.rows()).all(|i| m.row_norm(i) > 1e-3));
            let once = l2_normalize(&m).unwrap();
            let twice = l2_normalize(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1e-7);
            }
        }

        #[test]
        fn normalize_is_scale_invariant((d, data) in rows_strategy(), c in 0.01f32..100.0) {
            let m = EmbeddingMatrix::new(data.len() / d, d, data.clone()).unwrap();
            prop_assume!((0..m.rows()).all(|i| m.row_norm(i) > 1e-3));
            let scaled = EmbeddingMatrix::new(m.rows(), d, data.iter().map(|v| v * c).collect()).unwrap();
            let a = l2_normalize(&m).unwrap();
            let b = l2_normalize(&scaled).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-6);
            }
        }
    }
}
