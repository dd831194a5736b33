//! Declarative benchmark manifests.
//!
//! A manifest is a JSON file naming PEMB embedding files (paths relative to
//! the manifest's directory) plus the relevance sets or gold labels needed to
//! score them:
//!
//! ```json
//! {
//!   "kind": "paraphrase",
//!   "queries": "queries.pemb",
//!   "paraphrases": "paraphrases.pemb",
//!   "gallery": "gallery.pemb",
//!   "relevance": [[0], [1]]
//! }
//! ```
//!
//! | field                   | kinds                    | meaning                                   |
//! |-------------------------|--------------------------|-------------------------------------------|
//! | `queries`               | all                      | query rows (texts, or images for classification) |
//! | `paraphrases`           | paraphrase, sts          | row `i` pairs with query row `i`          |
//! | `gallery`               | paraphrase, retrieval    | candidate rows                            |
//! | `prototypes`            | classification           | one row per class                         |
//! | `relevance`             | retrieval, classification (optional for paraphrase) | relevant gallery rows per query; exactly one class label per query for classification |
//! | `gold`, `gold_range`    | sts                      | per-pair label, default range `[0, 5]`    |
//! | `query_expansions`, `paraphrase_expansions`, `expansion_k` | paraphrase, retrieval | `K` expansion rows per query, stored contiguously |

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{load_embeddings, read_header, PembHeader};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Paraphrase,
    Retrieval,
    Classification,
    Sts,
}

impl std::fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchmarkKind::Paraphrase => "paraphrase",
            BenchmarkKind::Retrieval => "retrieval",
            BenchmarkKind::Classification => "classification",
            BenchmarkKind::Sts => "sts",
        })
    }
}

fn default_gold_range() -> [f64; 2] {
    [0.0, 5.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    pub kind: BenchmarkKind,
    pub queries: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrases: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototypes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_expansions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_expansions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<f64>>,
    #[serde(default = "default_gold_range")]
    pub gold_range: [f64; 2],
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl BenchmarkManifest {
    pub fn new(kind: BenchmarkKind, queries: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            queries: queries.into(),
            paraphrases: None,
            gallery: None,
            prototypes: None,
            query_expansions: None,
            paraphrase_expansions: None,
            expansion_k: None,
            relevance: None,
            gold: None,
            gold_range: default_gold_range(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The file queries are ranked against for this kind.
    pub fn target(&self) -> Option<&PathBuf> {
        match self.kind {
            BenchmarkKind::Classification => self.prototypes.as_ref(),
            _ => self.gallery.as_ref(),
        }
    }

    pub fn load(&self) -> Result<LoadedBenchmark> {
        let summary = validate_manifest(self);
        if let Some(v) = summary.violations.first() {
            return Err(Error::InvalidManifest(format!("{}: {}", v.code, v.message)));
        }
        let load = |p: &Option<PathBuf>| p.as_ref().map(|p| load_embeddings(self.resolve(p))).transpose();
        Ok(LoadedBenchmark {
            manifest: self.clone(),
            queries: load_embeddings(self.resolve(&self.queries))?,
            paraphrases: load(&self.paraphrases)?,
            target: load(&self.target().cloned())?,
            query_expansions: load(&self.query_expansions)?,
            paraphrase_expansions: load(&self.paraphrase_expansions)?,
        })
    }
}

/// A validated manifest with its embedding files in memory.
#[derive(Debug, Clone)]
pub struct LoadedBenchmark {
    pub manifest: BenchmarkManifest,
    pub queries: EmbeddingMatrix,
    pub paraphrases: Option<EmbeddingMatrix>,
    /// Gallery, or class prototypes for classification.
    pub target: Option<EmbeddingMatrix>,
    pub query_expansions: Option<EmbeddingMatrix>,
    pub paraphrase_expansions: Option<EmbeddingMatrix>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub pairs: usize,
    pub gallery: usize,
    pub dim: usize,
    pub violations: Vec<Violation>,
}

impl ValidationSummary {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, message: impl Into<String>) {
        self.violations.push(Violation { code: code.into(), message: message.into() });
    }
}

/// Checks a manifest against the files it references, reading only headers.
/// Problems are collected, never raised.
pub fn validate_manifest(manifest: &BenchmarkManifest) -> ValidationSummary {
    use BenchmarkKind::*;

    let mut summary = ValidationSummary::default();
    let kind = manifest.kind;

    let header = |field: &str, path: Option<&PathBuf>, required: bool, summary: &mut ValidationSummary| -> Option<PembHeader> {
        match path {
            None => {
                if required {
                    summary.push("missing field", format!("{kind} manifest requires `{field}`"));
                }
                None
            }
            Some(p) => {
                let full = manifest.resolve(p);
                if !full.exists() {
                    summary.push("missing file", format!("{field}: {} does not exist", full.display()));
                    return None;
                }
                match read_header(&full) {
                    Ok(h) => Some(h),
                    Err(e) => {
                        summary.push("unreadable file", format!("{field}: {e}"));
                        None
                    }
                }
            }
        }
    };

    let queries = header("queries", Some(&manifest.queries), true, &mut summary);
    let paraphrases = header("paraphrases", manifest.paraphrases.as_ref(), matches!(kind, Paraphrase | Sts), &mut summary);
    let target_field = if kind == Classification { "prototypes" } else { "gallery" };
    let target = header(target_field, manifest.target(), matches!(kind, Paraphrase | Retrieval | Classification), &mut summary);
    let q_exp = header("query_expansions", manifest.query_expansions.as_ref(), false, &mut summary);
    let p_exp = header("paraphrase_expansions", manifest.paraphrase_expansions.as_ref(), false, &mut summary);

    if let Some(q) = queries {
        summary.pairs = q.rows;
        summary.dim = q.dim;
    }
    if let Some(t) = target {
        summary.gallery = t.rows;
    }

    let dim = queries.map(|h| h.dim);
    for (field, h) in [
        ("paraphrases", paraphrases),
        (target_field, target),
        ("query_expansions", q_exp),
        ("paraphrase_expansions", p_exp),
    ] {
        if let (Some(d), Some(h)) = (dim, h) {
            if h.dim != d {
                summary.push("dim mismatch", format!("{field} has d = {}, queries have d = {d}", h.dim));
            }
        }
    }

    if let (Some(q), Some(p)) = (queries, paraphrases) {
        if q.rows != p.rows {
            summary.push("count mismatch", format!("{} queries but {} paraphrases", q.rows, p.rows));
        }
    }

    if manifest.query_expansions.is_some() || manifest.paraphrase_expansions.is_some() {
        match manifest.expansion_k {
            None => summary.push("missing field", "expansion files require `expansion_k`"),
            Some(k) => {
                for (field, base, exp) in [("query_expansions", queries, q_exp), ("paraphrase_expansions", paraphrases, p_exp)] {
                    if let (Some(b), Some(e)) = (base, exp) {
                        if e.rows != b.rows * k {
                            summary.push("count mismatch", format!("{field} has {} rows, expected {}", e.rows, b.rows * k));
                        }
                    }
                }
            }
        }
    }

    match (&manifest.relevance, kind) {
        (None, Retrieval | Classification) => {
            summary.push("missing field", format!("{kind} manifest requires `relevance`"))
        }
        (Some(rel), _) => {
            if let Some(q) = queries {
                if rel.len() != q.rows {
                    summary.push("count mismatch", format!("{} relevance sets for {} queries", rel.len(), q.rows));
                }
            }
            for (i, set) in rel.iter().enumerate() {
                if set.is_empty() {
                    summary.push("empty relevance", format!("query {i} has no relevant items"));
                }
                if kind == Classification && set.len() > 1 {
                    summary.push("multiple labels", format!("query {i} has {} labels", set.len()));
                }
                if let Some(t) = target {
                    if let Some(&bad) = set.iter().find(|&&j| j >= t.rows) {
                        summary.push("index out of range", format!("query {i}: index {bad} >= {}", t.rows));
                    }
                }
            }
        }
        _ => {}
    }

    match (&manifest.gold, kind) {
        (None, Sts) => summary.push("missing field", "sts manifest requires `gold`"),
        (Some(gold), _) => {
            let [lo, hi] = manifest.gold_range;
            if let Some(q) = queries {
                if gold.len() != q.rows {
                    summary.push("count mismatch", format!("{} gold labels for {} pairs", gold.len(), q.rows));
                }
            }
            for (i, &g) in gold.iter().enumerate() {
                if !(lo..=hi).contains(&g) {
                    summary.push("gold out of range", format!("pair {i}: {g} outside [{lo}, {hi}]"));
                }
            }
        }
        _ => {}
    }

    summary
}
