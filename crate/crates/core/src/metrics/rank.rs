//! Similarity between two ranked lists.
//!
//! The top-k metrics count set intersections as integers and only divide at
//! the end, so they can be evaluated in any numeric field: `f64` for
//! reporting, [`ExactRatio`](crate::ExactRatio) for exact checks.

use std::collections::HashSet;

use num_traits::{FromPrimitive, Num};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_depth(lq: &[usize], lp: &[usize], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    for list in [lq, lp] {
        if list.len() < k {
            return Err(Error::ListTooShort { len: list.len(), k });
        }
    }
    Ok(())
}

fn count<T: FromPrimitive>(n: usize) -> T {
    T::from_usize(n).expect("count representable in target field")
}

/// Per-depth intersection sizes `|Lq[..d] ∩ Lp[..d]|` for `d = 1..=k`.
fn prefix_overlaps(lq: &[usize], lp: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut seen_q = HashSet::with_capacity(k);
    let mut seen_p = HashSet::with_capacity(k);
    let mut overlap = 0usize;
    let mut out = Vec::with_capacity(k);
    for (&a, &b) in lq[..k].iter().zip(&lp[..k]) {
        if a == b {
            overlap += 1;
        } else {
            overlap += usize::from(seen_p.contains(&a)) + usize::from(seen_q.contains(&b));
        }
        if !seen_q.insert(a) {
            return Err(Error::DuplicateIndex(a));
        }
        if !seen_p.insert(b) {
            return Err(Error::DuplicateIndex(b));
        }
        out.push(overlap);
    }
    Ok(out)
}

/// Top-k Average Overlap, `(1/k) Σ_{d=1..k} |Lq[..d] ∩ Lp[..d]| / d`.
pub fn average_overlap_in<T>(lq: &[usize], lp: &[usize], k: usize) -> Result<T>
where
    T: Num + FromPrimitive + Clone,
{
    check_depth(lq, lp, k)?;
    let overlaps = prefix_overlaps(lq, lp, k)?;
    let sum = overlaps
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &c)| acc + count::<T>(c) / count::<T>(i + 1));
    Ok(sum / count::<T>(k))
}

pub fn average_overlap(lq: &[usize], lp: &[usize], k: usize) -> Result<f64> {
    average_overlap_in::<f64>(lq, lp, k)
}

/// Top-k Jaccard similarity, `|Lq[..k] ∩ Lp[..k]| / |Lq[..k] ∪ Lp[..k]|`.
pub fn jaccard_at_k_in<T>(lq: &[usize], lp: &[usize], k: usize) -> Result<T>
where
    T: Num + FromPrimitive + Clone,
{
    check_depth(lq, lp, k)?;
    let inter = *prefix_overlaps(lq, lp, k)?.last().expect("k >= 1");
    Ok(count::<T>(inter) / count::<T>(2 * k - inter))
}

pub fn jaccard_at_k(lq: &[usize], lp: &[usize], k: usize) -> Result<f64> {
    jaccard_at_k_in::<f64>(lq, lp, k)
}

/// Position of every item of `lp` keyed by item, after checking that both
/// lists are permutations of the same set.
fn positions(lq: &[usize], lp: &[usize]) -> Result<Vec<usize>> {
    if lq.len() != lp.len() {
        return Err(Error::NotSamePermutationDomain);
    }
    if lq.len() < 2 {
        return Err(Error::TooFewItems { needed: 2, found: lq.len() });
    }
    let mut pos_p = std::collections::HashMap::with_capacity(lp.len());
    for (i, &item) in lp.iter().enumerate() {
        if pos_p.insert(item, i).is_some() {
            return Err(Error::NotSamePermutationDomain);
        }
    }
    let mut seen = HashSet::with_capacity(lq.len());
    lq.iter()
        .map(|item| {
            if !seen.insert(*item) {
                return Err(Error::NotSamePermutationDomain);
            }
            pos_p.get(item).copied().ok_or(Error::NotSamePermutationDomain)
        })
        .collect()
}

/// Merge-sort inversion count.
fn inversions(seq: &mut [usize], buf: &mut Vec<usize>) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = inversions(&mut seq[..mid], buf) + inversions(&mut seq[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            buf.push(seq[i]);
            i += 1;
        } else {
            buf.push(seq[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    buf.extend_from_slice(&seq[i..mid]);
    buf.extend_from_slice(&seq[j..n]);
    seq.copy_from_slice(buf);
    inv
}

/// Kendall's tau-a between two full rankings of the same items.
pub fn kendall_tau<T: Scalar>(lq: &[usize], lp: &[usize]) -> Result<T> {
    let mut seq = positions(lq, lp)?;
    let n = seq.len();
    let discordant = inversions(&mut seq, &mut Vec::with_capacity(n));
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(T::one() - T::lit(2.0 * discordant as f64 / pairs))
}

/// Spearman's rho between two full rankings of the same items.
pub fn spearman_rank<T: Scalar>(lq: &[usize], lp: &[usize]) -> Result<T> {
    let seq = positions(lq, lp)?;
    let n = seq.len() as f64;
    let d2: f64 = seq
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let d = i as f64 - j as f64;
            d * d
        })
        .sum();
    Ok(T::one() - T::lit(6.0 * d2 / (n * (n * n - 1.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ExactRatio;

    #[test]
    fn identical_and_disjoint() {
        let a = [4, 2, 9, 1];
        let b = [5, 6, 7, 8];
        for k in 1..=4 {
            assert_eq!(average_overlap(&a, &a, k).unwrap(), 1.0);
            assert_eq!(jaccard_at_k(&a, &a, k).unwrap(), 1.0);
            assert_eq!(average_overlap(&a, &b, k).unwrap(), 0.0);
            assert_eq!(jaccard_at_k(&a, &b, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn worked_example() {
        // Lq = [a, b, c], Lp = [b, a, d]
        let lq = [0, 1, 2];
        let lp = [1, 0, 3];
        assert_eq!(average_overlap_in::<ExactRatio>(&lq, &lp, 3).unwrap(), ExactRatio::new(5, 9));
        assert!((average_overlap(&lq, &lp, 3).unwrap() - 5.0 / 9.0).abs() < 1e-15);
        assert_eq!(jaccard_at_k_in::<ExactRatio>(&lq, &lp, 3).unwrap(), ExactRatio::new(1, 2));
    }

    #[test]
    fn jaccard_ignores_order_within_top_k() {
        assert_eq!(jaccard_at_k(&[1, 2, 3, 9], &[3, 1, 2, 7], 3).unwrap(), 1.0);
    }

    #[test]
    fn depth_errors() {
        assert!(matches!(average_overlap(&[1], &[1], 0), Err(Error::InvalidK)));
        assert!(matches!(jaccard_at_k(&[1, 2], &[1], 2), Err(Error::ListTooShort { len: 1, k: 2 })));
        assert!(matches!(average_overlap(&[1, 1], &[1, 2], 2), Err(Error::DuplicateIndex(1))));
    }

    #[test]
    fn full_list_correlations() {
        let id = [0, 1, 2, 3];
        let rev = [3, 2, 1, 0];
        assert_eq!(kendall_tau::<f64>(&id, &id).unwrap(), 1.0);
        assert_eq!(spearman_rank::<f64>(&id, &id).unwrap(), 1.0);
        assert_eq!(kendall_tau::<f64>(&id, &rev).unwrap(), -1.0);
        assert_eq!(spearman_rank::<f64>(&id, &rev).unwrap(), -1.0);
        let swap = [1, 0, 2, 3];
        assert!((kendall_tau::<f64>(&id, &swap).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // 1 - 6*2/(4*15) = 0.8
        assert!((spearman_rank::<f64>(&id, &swap).unwrap() - 0.8).abs() < 1e-15);
        assert!((kendall_tau::<f32>(&id, &swap).unwrap() - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn permutation_domain_errors() {
        assert!(matches!(kendall_tau::<f64>(&[0, 1], &[0, 2]), Err(Error::NotSamePermutationDomain)));
        assert!(matches!(kendall_tau::<f64>(&[0, 1], &[0, 1, 2]), Err(Error::NotSamePermutationDomain)));
        assert!(matches!(spearman_rank::<f64>(&[0, 0], &[0, 1]), Err(Error::NotSamePermutationDomain)));
    }
}
