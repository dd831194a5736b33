//! Exact cosine top-k search and query-expansion feature fusion.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{norm64, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Gallery indices ordered by descending score, ties by ascending index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn truncated(&self, k: usize) -> RankedList {
        let k = k.min(self.len());
        RankedList { indices: self.indices[..k].to_vec(), scores: self.scores[..k].to_vec() }
    }
}

/// Canonical ranking order: score descending, then index ascending.
/// Scores are finite, and `-0.0` ties with `0.0`.
#[inline]
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

#[inline]
fn dot64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

#[inline]
fn cosine(query: &[f32], query_norm: f64, row: &[f32], row_norm: f64) -> f64 {
    if query_norm == 0.0 || row_norm == 0.0 {
        0.0
    } else {
        dot64(query, row) / (query_norm * row_norm)
    }
}

fn check_k(k: usize, gallery: &EmbeddingMatrix) -> Result<()> {
    if k == 0 || k > gallery.rows() {
        return Err(Error::KOutOfRange { k, n: gallery.rows() });
    }
    Ok(())
}

fn gallery_norms(gallery: &EmbeddingMatrix) -> Vec<f64> {
    gallery.iter_rows().map(norm64).collect()
}

fn topk_one(query: &[f32], gallery: &EmbeddingMatrix, norms: &[f64], k: usize) -> RankedList {
    let qn = norm64(query);
    let mut scored: Vec<(f64, usize)> = gallery
        .iter_rows()
        .zip(norms)
        .enumerate()
        .map(|(i, (row, &rn))| (cosine(query, qn, row, rn), i))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    let (scores, indices) = scored.into_iter().unzip();
    RankedList { indices, scores }
}

/// Exact top-`k` gallery rows for each query by cosine similarity.
///
/// Scores are computed in f64 from the f32 inputs. Zero-norm rows score 0
/// against everything. Queries are scored in parallel; the output is
/// independent of the thread count.
pub fn cosine_topk(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix, k: usize) -> Result<Vec<RankedList>> {
    if queries.dim() != gallery.dim() {
        return Err(Error::DimMismatch { expected: gallery.dim(), found: queries.dim() });
    }
    check_k(k, gallery)?;
    let norms = gallery_norms(gallery);
    Ok((0..queries.rows())
        .into_par_iter()
        .map(|i| topk_one(queries.row(i), gallery, &norms, k))
        .collect())
}

/// Top-`k` for a single query row.
pub fn cosine_topk_row(query: &[f32], gallery: &EmbeddingMatrix, k: usize) -> Result<RankedList> {
    if query.len() != gallery.dim() {
        return Err(Error::DimMismatch { expected: gallery.dim(), found: query.len() });
    }
    check_k(k, gallery)?;
    Ok(topk_one(query, gallery, &gallery_norms(gallery), k))
}

/// An original query feature with `K >= 0` expansion features.
#[derive(Debug, Clone)]
pub struct QueryExpansionSet<'a> {
    pub original: &'a [f32],
    pub expansions: Vec<&'a [f32]>,
}

impl<'a> QueryExpansionSet<'a> {
    pub fn new(original: &'a [f32], expansions: Vec<&'a [f32]>) -> Self {
        Self { original, expansions }
    }
}

/// Arithmetic mean of the original feature and its expansions.
///
/// The mean is not renormalized: cosine ranking is scale invariant, so only
/// the direction matters.
pub fn expand_query(set: &QueryExpansionSet<'_>) -> Result<Vec<f32>> {
    let d = set.original.len();
    let mut acc: Vec<f64> = set.original.iter().map(|&v| f64::from(v)).collect();
    for e in &set.expansions {
        if e.len() != d {
            return Err(Error::DimMismatch { expected: d, found: e.len() });
        }
        for (a, &v) in acc.iter_mut().zip(e.iter()) {
            *a += f64::from(v);
        }
    }
    let count = (set.expansions.len() + 1) as f64;
    Ok(acc.into_iter().map(|a| (a / count) as f32).collect())
}

pub fn retrieve_expanded(set: &QueryExpansionSet<'_>, gallery: &EmbeddingMatrix, k: usize) -> Result<RankedList> {
    let fused = expand_query(set)?;
    cosine_topk_row(&fused, gallery, k)
}

/// Fuses every query row with its `k_expansions` expansion rows.
///
/// Expansions for query `i` are stored at rows `i*K .. (i+1)*K`.
pub fn expand_matrix(queries: &EmbeddingMatrix, expansions: &EmbeddingMatrix, k_expansions: usize) -> Result<EmbeddingMatrix> {
    if queries.dim() != expansions.dim() {
        return Err(Error::DimMismatch { expected: queries.dim(), found: expansions.dim() });
    }
    if expansions.rows() != queries.rows() * k_expansions {
        return Err(Error::LengthMismatch { left: queries.rows() * k_expansions, right: expansions.rows() });
    }
    let mut data = Vec::with_capacity(queries.data().len());
    for i in 0..queries.rows() {
        let rows = (i * k_expansions..(i + 1) * k_expansions).map(|j| expansions.row(j)).collect();
        data.extend(expand_query(&QueryExpansionSet::new(queries.row(i), rows))?);
    }
    EmbeddingMatrix::new(queries.rows(), queries.dim(), data)
}

#[derive(Serialize)]
struct RankingLine<'a> {
    query: usize,
    indices: &'a [usize],
    scores: &'a [f64],
}

/// Writes one `{"query": i, "indices": [...], "scores": [...]}` line per list.
pub fn write_rankings_jsonl<W: Write>(mut out: W, lists: &[RankedList]) -> std::io::Result<()> {
    for (query, list) in lists.iter().enumerate() {
        let line = RankingLine { query, indices: &list.indices, scores: &list.scores };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
