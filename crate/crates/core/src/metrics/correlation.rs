//! Pearson and Spearman correlation for the sentence-similarity protocol.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Predicted similarities paired with gold labels on a bounded scale.
#[derive(Debug, Clone)]
pub struct LabeledSimilarityPairs<T> {
    predictions: Vec<T>,
    gold: Vec<T>,
}

impl<T: Scalar> LabeledSimilarityPairs<T> {
    /// Gold labels must lie in `[lo, hi]` (0 to 5 for STS-B).
    pub fn new(predictions: Vec<T>, gold: Vec<T>, range: (T, T)) -> Result<Self> {
        check_pair(&predictions, &gold)?;
        let (lo, hi) = range;
        if let Some(g) = gold.iter().find(|g| **g < lo || **g > hi) {
            return Err(Error::OutOfRange {
                value: g.to_f64().unwrap_or(f64::NAN),
                lo: lo.to_f64().unwrap_or(f64::NAN),
                hi: hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { predictions, gold })
    }

    pub fn predictions(&self) -> &[T] {
        &self.predictions
    }

    pub fn gold(&self) -> &[T] {
        &self.gold
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn pearson(&self) -> Result<T> {
        pearson(&self.predictions, &self.gold)
    }

    pub fn spearman(&self) -> Result<T> {
        spearman(&self.predictions, &self.gold)
    }
}

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::TooFewItems { needed: 2, found: x.len() });
    }
    if let Some(pos) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(pos % x.len()));
    }
    Ok(())
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::from_count(x.len())
}

/// Product-moment correlation, two-pass.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let avg = T::from_count(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of the average fractional ranks.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}
