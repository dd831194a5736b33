//! Symmetric InfoNCE over a batch of paired embeddings.

use parabench_core::Scalar;

use crate::error::{DuoError, Result};
use crate::tensor::{dot, Matrix};

/// Default upper bound on `exp(logit_scale)`.
pub const LOGIT_SCALE_MAX: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct InfoNceOutput<T> {
    pub loss: T,
    pub grad_image: Matrix<T>,
    pub grad_text: Matrix<T>,
    pub grad_logit_scale: T,
}

fn normalize_rows<T: Scalar>(z: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let mut u = z.clone();
    let mut norms = Vec::with_capacity(z.rows);
    for i in 0..z.rows {
        let n = dot(z.row(i), z.row(i)).sqrt();
        if !(n > T::zero()) {
            return Err(DuoError::ZeroNorm { row: i });
        }
        for v in u.row_mut(i) {
            *v = *v / n;
        }
        norms.push(n);
    }
    Ok((u, norms))
}

/// Gradient through `u = z / |z|`: `(du - u (u·du)) / |z|`.
fn normalize_backward<T: Scalar>(u: &Matrix<T>, norms: &[T], du: &Matrix<T>) -> Matrix<T> {
    let mut dz = du.clone();
    for i in 0..u.rows {
        let proj = dot(u.row(i), du.row(i));
        let (ui, n) = (u.row(i), norms[i]);
        for (g, &uv) in dz.row_mut(i).iter_mut().zip(ui) {
            *g = (*g - uv * proj) / n;
        }
    }
    dz
}

/// Stable `log Σ exp`.
fn logsumexp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let m = xs.clone().fold(T::neg_infinity(), T::max);
    m + xs.map(|x| (x - m).exp()).sum::<T>().ln()
}

/// Symmetric cross-entropy with matched pairs on the diagonal.
///
/// Rows are L2-normalized internally, logits are `min(exp(s), max_scale) ·
/// Ẑi Ẑtᵀ`, and the loss is the mean of the image→text and text→image
/// cross-entropies. When the scale is clamped its gradient is zero.
pub fn infonce_loss<T: Scalar>(image: &Matrix<T>, text: &Matrix<T>, logit_scale: T, max_scale: T) -> Result<InfoNceOutput<T>> {
    let n = image.rows;
    if n != text.rows {
        return Err(DuoError::ShapeMismatch { expected: n, found: text.rows });
    }
    if image.cols != text.cols {
        return Err(DuoError::ShapeMismatch { expected: image.cols, found: text.cols });
    }
    if n < 2 {
        return Err(DuoError::BatchTooSmall(n));
    }
    let (ui, ni) = normalize_rows(image)?;
    let (ut, nt) = normalize_rows(text)?;
    let raw_scale = logit_scale.exp();
    let clamped = raw_scale > max_scale;
    let scale = if clamped { max_scale } else { raw_scale };

    let cos = ui.matmul_t(&ut.data, n);
    let logits = cos.map(|c| c * scale);

    let nn = T::from_count(n);
    let half_n = T::lit(2.0) * nn;
    let mut loss = T::zero();
    // dL/dlogits
    let mut dlogits = Matrix::zeros(n, n);
    for i in 0..n {
        let row = logits.row(i);
        let lse = logsumexp(row.iter().copied());
        loss = loss + lse - row[i];
        for j in 0..n {
            let p = (row[j] - lse).exp();
            let target = if i == j { T::one() } else { T::zero() };
            dlogits.data[i * n + j] = (p - target) / half_n;
        }
    }
    for j in 0..n {
        let col = (0..n).map(|i| logits.get(i, j));
        let lse = logsumexp(col);
        loss = loss + lse - logits.get(j, j);
        for i in 0..n {
            let p = (logits.get(i, j) - lse).exp();
            let target = if i == j { T::one() } else { T::zero() };
            dlogits.data[i * n + j] = dlogits.data[i * n + j] + (p - target) / half_n;
        }
    }
    let loss = loss / half_n;

    let dscale = dlogits.data.iter().zip(&cos.data).fold(T::zero(), |acc, (&g, &c)| acc + g * c);
    let grad_logit_scale = if clamped { T::zero() } else { dscale * raw_scale };

    let dcos = dlogits.map(|g| g * scale);
    let dui = dcos.matmul(&ut.data, ut.cols);
    // dcosᵀ · ui
    let mut dut = Matrix::zeros(n, ui.cols);
    dcos.add_tmatmul_into(&ui, &mut dut.data);

    Ok(InfoNceOutput {
        loss,
        grad_image: normalize_backward(&ui, &ni, &dui),
        grad_text: normalize_backward(&ut, &nt, &dut),
        grad_logit_scale,
    })
}
