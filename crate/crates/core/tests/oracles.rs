//! Implementation-independent oracles for retrieval and the rank metrics.

use std::collections::BTreeSet;

use parabench_core::metrics::{average_overlap, average_overlap_in, jaccard_at_k, jaccard_at_k_in, kendall_tau, spearman, spearman_rank};
use parabench_core::metrics::eval_paraphrase;
use parabench_core::{cosine_topk, decode, encode, expand_query, EmbeddingMatrix, ExactRatio, QueryExpansionSet};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_ao(lq: &[usize], lp: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for d in 1..=k {
        let a: BTreeSet<_> = lq[..d].iter().collect();
        let b: BTreeSet<_> = lp[..d].iter().collect();
        total += a.intersection(&b).count() as f64 / d as f64;
    }
    total / k as f64
}

fn naive_js(lq: &[usize], lp: &[usize], k: usize) -> f64 {
    let a: BTreeSet<_> = lq[..k].iter().collect();
    let b: BTreeSet<_> = lp[..k].iter().collect();
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

fn random_list(rng: &mut ChaCha8Rng, universe: usize, len: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..universe).collect();
    all.shuffle(rng);
    all.truncate(len);
    all
}

#[test]
fn ao_js_match_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1200 {
        let k = [1, 5, 10, 20][case % 4];
        let universe = k + rng.gen_range(0..2 * k + 1);
        let lq = random_list(&mut rng, universe, k);
        let lp = random_list(&mut rng, universe, k);
        let ao = average_overlap(&lq, &lp, k).unwrap();
        let js = jaccard_at_k(&lq, &lp, k).unwrap();
        assert!((ao - naive_ao(&lq, &lp, k)).abs() <= 1e-12);
        assert!((js - naive_js(&lq, &lp, k)).abs() <= 1e-12);
        assert_eq!(ao, average_overlap(&lp, &lq, k).unwrap());
        assert_eq!(js, jaccard_at_k(&lp, &lq, k).unwrap());
    }
}

#[test]
fn top_weighting_closed_form() {
    for k in 1..=20usize {
        let mut previous = ExactRatio::from_integer(2);
        for i in 1..=k {
            // shared item 0 at depth i in both lists, everything else disjoint
            let mut lq: Vec<usize> = (1..=k).collect();
            let mut lp: Vec<usize> = (100..100 + k).collect();
            lq[i - 1] = 0;
            lp[i - 1] = 0;
            let closed: ExactRatio = (i..=k).map(|d| ExactRatio::new(1, d as i64)).sum::<ExactRatio>() / ExactRatio::from_integer(k as i64);
            let exact = average_overlap_in::<ExactRatio>(&lq, &lp, k).unwrap();
            assert_eq!(exact, closed);
            assert!(exact < previous);
            previous = exact;
        }
    }
}

fn naive_topk(query: &[f32], gallery: &EmbeddingMatrix, k: usize) -> Vec<usize> {
    let q: Vec<f64> = query.iter().map(|&v| v as f64).collect();
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = (0..gallery.rows())
        .map(|i| {
            let g: Vec<f64> = gallery.row(i).iter().map(|&v| v as f64).collect();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = q.iter().zip(&g).map(|(a, b)| a * b).sum();
            let s = if qn == 0.0 || gn == 0.0 { 0.0 } else { dot / (qn * gn) };
            (s, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, dim: usize, quantized: bool) -> EmbeddingMatrix {
    let data = (0..rows * dim)
        .map(|_| if quantized { rng.gen_range(-2i32..=2) as f32 } else { rng.gen_range(-1.0f32..1.0) })
        .collect();
    EmbeddingMatrix::new(rows, dim, data).unwrap()
}

#[test]
fn topk_matches_full_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1200 {
        let n = rng.gen_range(1..=64);
        let d = rng.gen_range(1..=32);
        let k = rng.gen_range(1..=n);
        // every third case draws from a tiny integer grid so ties are common
        let quantized = case % 3 == 0;
        let mut gallery = random_matrix(&mut rng, n, d, quantized);
        if case % 5 == 0 && n > 2 {
            let mut rows: Vec<Vec<f32>> = gallery.iter_rows().map(<[f32]>::to_vec).collect();
            rows[n - 1] = rows[0].clone();
            rows[n / 2] = rows[0].iter().map(|v| v * 3.0).collect();
            gallery = EmbeddingMatrix::from_rows(d, &rows).unwrap();
        }
        let queries = random_matrix(&mut rng, 3, d, quantized);
        let got = cosine_topk(&queries, &gallery, k).unwrap();
        for (qi, list) in got.iter().enumerate() {
            assert_eq!(list.indices, naive_topk(queries.row(qi), &gallery, k), "case {case}");
            assert!(list.scores.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}

#[test]
fn topk_prefix_and_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.gen_range(2..=64);
        let d = rng.gen_range(1..=16);
        let gallery = random_matrix(&mut rng, n, d, false);
        let q = random_matrix(&mut rng, 1, d, false);
        let full = cosine_topk(&q, &gallery, n).unwrap().remove(0);
        let k = rng.gen_range(1..=n);
        let short = cosine_topk(&q, &gallery, k).unwrap().remove(0);
        assert_eq!(short.indices, full.indices[..k]);
        let c = rng.gen_range(0.1f32..10.0);
        let scaled = EmbeddingMatrix::new(1, d, q.data().iter().map(|v| v * c).collect()).unwrap();
        assert_eq!(cosine_topk(&scaled, &gallery, k).unwrap()[0].indices, short.indices);
    }
}

#[test]
fn duplicate_expansions_are_ranking_neutral() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gallery = random_matrix(&mut rng, 64, 8, false);
    let queries = random_matrix(&mut rng, 20, 8, false);
    for i in 0..queries.rows() {
        let q = queries.row(i);
        let base = cosine_topk(&queries.select_rows(&[i]), &gallery, 10).unwrap().remove(0);
        let fused = expand_query(&QueryExpansionSet::new(q, vec![q; 3])).unwrap();
        let fused = EmbeddingMatrix::new(1, 8, fused).unwrap();
        assert_eq!(cosine_topk(&fused, &gallery, 10).unwrap()[0].indices, base.indices);
    }
}

fn naive_tau(a: &[usize], b: &[usize]) -> f64 {
    let pos_b = |x: usize| b.iter().position(|&y| y == x).unwrap();
    let n = a.len();
    let (mut conc, mut disc) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            if pos_b(a[i]) < pos_b(a[j]) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    (conc - disc) as f64 / (n * (n - 1) / 2) as f64
}

fn naive_rho(a: &[usize], b: &[usize]) -> f64 {
    // Pearson over rank vectors
    let ra: Vec<f64> = a.iter().map(|&x| a.iter().position(|&y| y == x).unwrap() as f64).collect();
    let rb: Vec<f64> = a.iter().map(|&x| b.iter().position(|&y| y == x).unwrap() as f64).collect();
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

#[test]
fn full_list_correlations_match_pair_count_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=40);
        let a = random_list(&mut rng, n, n);
        let b = random_list(&mut rng, n, n);
        assert!((kendall_tau::<f64>(&a, &b).unwrap() - naive_tau(&a, &b)).abs() <= 1e-12);
        assert!((spearman_rank::<f64>(&a, &b).unwrap() - naive_rho(&a, &b)).abs() <= 1e-12);
    }
}

#[test]
fn unrelated_queries_sit_at_random_overlap_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (n, d, pairs, k) = (1000, 64, 300, 10);
    let gaussian = |rng: &mut ChaCha8Rng| -> f32 {
        let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
        ((-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()) as f32
    };
    let gallery = EmbeddingMatrix::new(n, d, (0..n * d).map(|_| gaussian(&mut rng)).collect()).unwrap();
    let mut q = Vec::new();
    let mut p = Vec::new();
    for _ in 0..pairs {
        let a: Vec<f32> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let mut b: Vec<f32> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let proj = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f32>() / a.iter().map(|x| x * x).sum::<f32>();
        for (bi, ai) in b.iter_mut().zip(&a) {
            *bi -= proj * ai;
        }
        q.extend(a);
        p.extend(b);
    }
    let q = EmbeddingMatrix::new(pairs, d, q).unwrap();
    let p = EmbeddingMatrix::new(pairs, d, p).unwrap();
    let reports = eval_paraphrase(&q, &p, &gallery, &[k]).unwrap();

    // Monte-Carlo estimate for two independent uniform top-k lists.
    let trials = 4000;
    let (mut ao, mut js) = (0.0, 0.0);
    for _ in 0..trials {
        let a = random_list(&mut rng, n, k);
        let b = random_list(&mut rng, n, k);
        ao += naive_ao(&a, &b, k);
        js += naive_js(&a, &b, k);
    }
    let (ao, js) = (ao / trials as f64, js / trials as f64);
    assert!((reports[0].aggregate - ao).abs() < 0.01, "AO {} vs {}", reports[0].aggregate, ao);
    assert!((reports[1].aggregate - js).abs() < 0.01, "JS {} vs {}", reports[1].aggregate, js);
}

proptest! {
    #[test]
    fn pemb_round_trip_is_bit_exact(rows in 0usize..6, dim in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..rows * dim)
            .map(|_| loop {
                let v = f32::from_bits(rng.gen());
                if v.is_finite() { break v; }
            })
            .collect();
        let m = EmbeddingMatrix::new(rows, dim, data).unwrap();
        let back = decode(&encode(&m)).unwrap();
        let bits = |m: &EmbeddingMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&m), bits(&back));
        prop_assert_eq!((back.rows(), back.dim()), (rows, dim));
    }

    #[test]
    fn jaccard_permutation_invariant(seed in any::<u64>(), k in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_list(&mut rng, 2 * k, k);
        let b = random_list(&mut rng, 2 * k, k);
        let mut a2 = a.clone();
        a2.shuffle(&mut rng);
        prop_assert_eq!(jaccard_at_k_in::<ExactRatio>(&a, &b, k).unwrap(), jaccard_at_k_in::<ExactRatio>(&a2, &b, k).unwrap());
        let ao = average_overlap(&a, &b, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&ao));
        prop_assert_eq!(ao == 1.0, a == b);
        let js = jaccard_at_k(&a, &b, k).unwrap();
        let same_set = a.iter().collect::<BTreeSet<_>>() == b.iter().collect::<BTreeSet<_>>();
        prop_assert_eq!(js == 1.0, same_set);
    }

    #[test]
    fn spearman_monotone_invariant(x in prop::collection::vec(-10.0f64..10.0, 3..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-5.0..5.0)).collect();
        let fx: Vec<f64> = x.iter().map(|v| v.exp() + 3.0 * v).collect();
        if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&fx, &y)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
