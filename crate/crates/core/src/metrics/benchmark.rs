//! Whole-benchmark evaluation: retrieve, score every item, aggregate.

use rayon::prelude::*;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::manifest::{BenchmarkKind, LoadedBenchmark};
use crate::metrics::correlation::{pearson, spearman, LabeledSimilarityPairs};
use crate::metrics::ir::{recall_at_k, rsum, topk_accuracy};
use crate::metrics::rank::{average_overlap, jaccard_at_k};
use crate::metrics::report::MetricReport;
use crate::retrieval::{cosine_topk, expand_matrix, RankedList};

/// Recall depths summed by RSUM.
pub const RECALL_DEPTHS: [usize; 3] = [1, 5, 10];

fn max_k(ks: &[usize]) -> Result<usize> {
    match ks.iter().copied().max() {
        Some(k) if ks.iter().all(|&k| k >= 1) => Ok(k),
        _ => Err(Error::InvalidK),
    }
}

/// AO@k and JS@k between the rankings of each query and its row-aligned
/// paraphrase, for every requested depth. Reports come back as
/// `[AO@k1, JS@k1, AO@k2, JS@k2, ...]`.
pub fn eval_paraphrase(
    queries: &EmbeddingMatrix,
    paraphrases: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
    ks: &[usize],
) -> Result<Vec<MetricReport>> {
    if queries.rows() != paraphrases.rows() {
        return Err(Error::LengthMismatch { left: queries.rows(), right: paraphrases.rows() });
    }
    let depth = max_k(ks)?;
    let lq = cosine_topk(queries, gallery, depth)?;
    let lp = cosine_topk(paraphrases, gallery, depth)?;
    let mut reports = Vec::with_capacity(ks.len() * 2);
    for &k in ks {
        let pairs: Result<Vec<(f64, f64)>> = lq
            .par_iter()
            .zip(lp.par_iter())
            .map(|(a, b)| Ok((average_overlap(&a.indices, &b.indices, k)?, jaccard_at_k(&a.indices, &b.indices, k)?)))
            .collect();
        let (ao, js): (Vec<f64>, Vec<f64>) = pairs?.into_iter().unzip();
        reports.push(MetricReport::from_items("AO", Some(k), ao));
        reports.push(MetricReport::from_items("JS", Some(k), js));
    }
    Ok(reports)
}

/// The paraphrase protocol on a loaded manifest. Expansion files, when
/// present, replace each side by its fused query feature first.
pub fn eval_paraphrase_benchmark(bench: &LoadedBenchmark, k: usize) -> Result<(MetricReport, MetricReport)> {
    let (queries, paraphrases, gallery) = paraphrase_inputs(bench)?;
    let mut reports = eval_paraphrase(&queries, &paraphrases, gallery, &[k])?;
    let js = reports.pop().expect("two reports");
    let ao = reports.pop().expect("two reports");
    Ok((ao, js))
}

fn fused(bench: &LoadedBenchmark, base: &EmbeddingMatrix, exp: Option<&EmbeddingMatrix>) -> Result<EmbeddingMatrix> {
    match (exp, bench.manifest.expansion_k) {
        (Some(e), Some(k)) => expand_matrix(base, e, k),
        (Some(_), None) => Err(Error::InvalidManifest("expansion files require `expansion_k`".into())),
        (None, _) => Ok(base.clone()),
    }
}

fn require<'a>(m: Option<&'a EmbeddingMatrix>, what: &str) -> Result<&'a EmbeddingMatrix> {
    m.ok_or_else(|| Error::InvalidManifest(format!("manifest has no {what}")))
}

fn paraphrase_inputs(bench: &LoadedBenchmark) -> Result<(EmbeddingMatrix, EmbeddingMatrix, &EmbeddingMatrix)> {
    let paraphrases = require(bench.paraphrases.as_ref(), "paraphrases")?;
    let gallery = require(bench.target.as_ref(), "gallery")?;
    let q = fused(bench, &bench.queries, bench.query_expansions.as_ref())?;
    let p = fused(bench, paraphrases, bench.paraphrase_expansions.as_ref())?;
    Ok((q, p, gallery))
}

fn recall_reports(lists: &[RankedList], relevance: &[Vec<usize>], ks: &[usize], metric: &str) -> Result<Vec<MetricReport>> {
    ks.iter()
        .map(|&k| {
            let hits: Result<Vec<f64>> = lists
                .par_iter()
                .zip(relevance.par_iter())
                .map(|(l, rel)| recall_at_k(&l.indices, rel, k).map(|h| f64::from(u8::from(h))))
                .collect();
            Ok(MetricReport::from_items(metric, Some(k), hits?))
        })
        .collect()
}

/// Image retrieval recall (`R@k`) for each requested depth.
pub fn eval_retrieval(
    queries: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
    relevance: &[Vec<usize>],
    ks: &[usize],
) -> Result<Vec<MetricReport>> {
    if relevance.len() != queries.rows() {
        return Err(Error::LengthMismatch { left: queries.rows(), right: relevance.len() });
    }
    let lists = cosine_topk(queries, gallery, max_k(ks)?)?;
    recall_reports(&lists, relevance, ks, "R")
}

/// Image-retrieval and text-retrieval recall at 1, 5, 10 plus their RSUM.
///
/// Text retrieval ranks the query rows for each gallery row; gallery rows no
/// query is relevant to are skipped.
pub fn eval_rsum(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix, relevance: &[Vec<usize>]) -> Result<Vec<MetricReport>> {
    let mut reports = eval_retrieval(queries, gallery, relevance, &RECALL_DEPTHS)?;

    let mut inverse = vec![Vec::new(); gallery.rows()];
    for (q, set) in relevance.iter().enumerate() {
        for &g in set {
            inverse.get_mut(g).ok_or(Error::KOutOfRange { k: g, n: gallery.rows() })?.push(q);
        }
    }
    let keep: Vec<usize> = (0..gallery.rows()).filter(|&g| !inverse[g].is_empty()).collect();
    let images = gallery.select_rows(&keep);
    let inverse: Vec<Vec<usize>> = keep.iter().map(|&g| std::mem::take(&mut inverse[g])).collect();
    let lists = cosine_topk(&images, queries, *RECALL_DEPTHS.last().unwrap())?;
    reports.extend(recall_reports(&lists, &inverse, &RECALL_DEPTHS, "TR_R")?);

    let pct = |r: &MetricReport| r.aggregate * 100.0;
    let ir = [pct(&reports[0]), pct(&reports[1]), pct(&reports[2])];
    let tr = [pct(&reports[3]), pct(&reports[4]), pct(&reports[5])];
    reports.push(MetricReport::from_items("RSUM", None, vec![rsum(ir, tr)?]));
    Ok(reports)
}

/// Zero-shot top-k accuracy: each query row is ranked against class
/// prototypes and scored against its label.
pub fn eval_classification(
    queries: &EmbeddingMatrix,
    prototypes: &EmbeddingMatrix,
    labels: &[usize],
    ks: &[usize],
) -> Result<Vec<MetricReport>> {
    if labels.len() != queries.rows() {
        return Err(Error::LengthMismatch { left: queries.rows(), right: labels.len() });
    }
    let lists = cosine_topk(queries, prototypes, max_k(ks)?)?;
    let classes = prototypes.rows();
    ks.iter()
        .map(|&k| {
            let hits: Result<Vec<f64>> = lists
                .par_iter()
                .zip(labels.par_iter())
                .map(|(l, &label)| topk_accuracy(&l.indices, label, classes, k).map(|h| f64::from(u8::from(h))))
                .collect();
            Ok(MetricReport::from_items("ACC", Some(k), hits?))
        })
        .collect()
}

fn row_cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Pearson and Spearman correlation of row-pair cosine similarities with
/// gold labels. Each report holds the single correlation as its only item.
pub fn eval_sts(left: &EmbeddingMatrix, right: &EmbeddingMatrix, gold: &[f64], range: [f64; 2]) -> Result<[MetricReport; 2]> {
    if left.rows() != right.rows() {
        return Err(Error::LengthMismatch { left: left.rows(), right: right.rows() });
    }
    if left.dim() != right.dim() {
        return Err(Error::DimMismatch { expected: left.dim(), found: right.dim() });
    }
    let predictions: Vec<f64> = (0..left.rows()).map(|i| row_cosine(left.row(i), right.row(i))).collect();
    let pairs = LabeledSimilarityPairs::new(predictions, gold.to_vec(), (range[0], range[1]))?;
    Ok([
        MetricReport::from_items("pearson", None, vec![pearson(pairs.predictions(), pairs.gold())?]),
        MetricReport::from_items("spearman", None, vec![spearman(pairs.predictions(), pairs.gold())?]),
    ])
}

/// Runs the protocol the manifest's kind selects.
///
/// Retrieval manifests also get text-retrieval recall and RSUM when both
/// sides have at least ten rows.
pub fn evaluate_manifest(bench: &LoadedBenchmark, ks: &[usize]) -> Result<Vec<MetricReport>> {
    let m = &bench.manifest;
    match m.kind {
        BenchmarkKind::Paraphrase => {
            let (q, p, gallery) = paraphrase_inputs(bench)?;
            eval_paraphrase(&q, &p, gallery, ks)
        }
        BenchmarkKind::Retrieval => {
            let gallery = require(bench.target.as_ref(), "gallery")?;
            let relevance = m.relevance.as_deref().ok_or_else(|| Error::InvalidManifest("no relevance".into()))?;
            let q = fused(bench, &bench.queries, bench.query_expansions.as_ref())?;
            let mut reports = eval_retrieval(&q, gallery, relevance, ks)?;
            if q.rows() >= 10 && gallery.rows() >= 10 {
                reports.extend(eval_rsum(&q, gallery, relevance)?.into_iter().skip(RECALL_DEPTHS.len()));
            }
            Ok(reports)
        }
        BenchmarkKind::Classification => {
            let protos = require(bench.target.as_ref(), "prototypes")?;
            let relevance = m.relevance.as_deref().ok_or_else(|| Error::InvalidManifest("no relevance".into()))?;
            let labels: Vec<usize> = relevance.iter().map(|s| s.first().copied().unwrap_or(usize::MAX)).collect();
            eval_classification(&bench.queries, protos, &labels, ks)
        }
        BenchmarkKind::Sts => {
            let p = require(bench.paraphrases.as_ref(), "paraphrases")?;
            let gold = m.gold.as_deref().ok_or_else(|| Error::InvalidManifest("no gold".into()))?;
            Ok(eval_sts(&bench.queries, p, gold, m.gold_range)?.into())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(dim: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn identical_paraphrases_score_one() {
        let rows: Vec<Vec<f32>> = (0..20).map(|i| vec![(i as f32).sin(), (i as f32).cos(), 0.3]).collect();
        let gallery = EmbeddingMatrix::from_rows(3, &rows).unwrap();
        let q = gallery.select_rows(&[1, 4, 9]);
        let reports = eval_paraphrase(&q, &q, &gallery, &[10]).unwrap();
        assert_eq!(reports[0].label(), "AO@10");
        assert_eq!(reports[0].aggregate, 1.0);
        assert_eq!(reports[1].aggregate, 1.0);
        assert_eq!(reports[0].count, 3);
    }

    #[test]
    fn retrieval_and_rsum_perfect() {
        let rows: Vec<Vec<f32>> = (0..12).map(|i| axis(12, i)).collect();
        let gallery = EmbeddingMatrix::from_rows(12, &rows).unwrap();
        let relevance: Vec<Vec<usize>> = (0..12).map(|i| vec![i]).collect();
        let reports = eval_rsum(&gallery, &gallery, &relevance).unwrap();
        let labels: Vec<_> = reports.iter().map(MetricReport::label).collect();
        assert_eq!(labels, ["R@1", "R@5", "R@10", "TR_R@1", "TR_R@5", "TR_R@10", "RSUM"]);
        assert_eq!(reports[6].aggregate, 600.0);
    }

    #[test]
    fn classification_accuracy() {
        let protos = EmbeddingMatrix::from_rows(3, &[axis(3, 0), axis(3, 1), axis(3, 2)]).unwrap();
        let images = EmbeddingMatrix::from_rows(3, &[vec![0.9f32, 0.1, 0.0], vec![0.0, 0.2, 0.9]]).unwrap();
        let r = eval_classification(&images, &protos, &[0, 1], &[1, 2]).unwrap();
        assert_eq!(r[0].per_item, vec![1.0, 0.0]);
        assert_eq!(r[1].per_item, vec![1.0, 1.0]);
    }

    #[test]
    fn sts_correlations() {
        let a = EmbeddingMatrix::from_rows(2, &[[1.0f32, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let b = EmbeddingMatrix::from_rows(2, &[[1.0f32, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let [p, s] = eval_sts(&a, &b, &[5.0, 3.0, 0.0], [0.0, 5.0]).unwrap();
        assert!(p.aggregate > 0.99);
        assert!((s.aggregate - 1.0).abs() < 1e-12);
    }
}
