//! Per-query retrieval and classification hits.

use crate::error::{Error, Result};

fn check_k(ranked: &[usize], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    if ranked.len() < k {
        return Err(Error::ListTooShort { len: ranked.len(), k });
    }
    Ok(())
}

/// Whether any relevant index appears in the top `k` of `ranked`.
pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<bool> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevanceSet);
    }
    check_k(ranked, k)?;
    Ok(ranked[..k].iter().any(|i| relevant.contains(i)))
}

/// Whether the true class `label` is among the top `k` class prototypes.
pub fn topk_accuracy(ranked: &[usize], label: usize, classes: usize, k: usize) -> Result<bool> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    check_k(ranked, k)?;
    Ok(ranked[..k].contains(&label))
}

/// RSUM over image-retrieval and text-retrieval recalls at k = 1, 5, 10,
/// each given in percent.
pub fn rsum(image_retrieval: [f64; 3], text_retrieval: [f64; 3]) -> Result<f64> {
    let mut total = 0.0;
    for value in image_retrieval.into_iter().chain(text_retrieval) {
        if !(0.0..=100.0).contains(&value) {
            return Err(Error::OutOfRange { value, lo: 0.0, hi: 100.0 });
        }
        total += value;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall() {
        let ranked = [4, 8, 1, 2, 5, 3, 9];
        assert!(recall_at_k(&ranked, &[4], 5).unwrap());
        assert!(!recall_at_k(&ranked, &[3], 5).unwrap());
        assert!(recall_at_k(&[1, 2, 9, 4, 5], &[3, 9], 5).unwrap());
        assert!(matches!(recall_at_k(&ranked, &[], 5), Err(Error::EmptyRelevanceSet)));
        assert!(matches!(recall_at_k(&ranked, &[1], 8), Err(Error::ListTooShort { .. })));
    }

    #[test]
    fn accuracy() {
        let ranked = [3, 7, 0, 1, 2];
        assert!(topk_accuracy(&ranked, 3, 10, 1).unwrap());
        assert!(!topk_accuracy(&ranked, 7, 10, 1).unwrap());
        assert!(topk_accuracy(&ranked, 7, 10, 5).unwrap());
        assert!(matches!(topk_accuracy(&ranked, 10, 10, 1), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn rsum_bounds() {
        assert_eq!(rsum([100.0; 3], [100.0; 3]).unwrap(), 600.0);
        assert_eq!(rsum([0.0; 3], [0.0; 3]).unwrap(), 0.0);
        assert!(matches!(rsum([101.0, 0.0, 0.0], [0.0; 3]), Err(Error::OutOfRange { .. })));
        assert!(rsum([f64::NAN, 0.0, 0.0], [0.0; 3]).is_err());
    }
}
