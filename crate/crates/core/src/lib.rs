//! Paraphrase-consistency evaluation for dual-encoder retrieval.
//!
//! The crate holds the shared embedding data model ([`EmbeddingMatrix`]), the
//! PEMB file codec, benchmark manifests, exact cosine top-k retrieval with
//! query expansion, and every evaluation metric: top-k Average Overlap and
//! Jaccard similarity between ranked lists, full-list Kendall/Spearman,
//! recall@k, RSUM, top-k accuracy and Pearson/Spearman correlation.
//!
//! Numeric kernels that do not depend on the storage format are generic over
//! [`Scalar`] (any `num_traits::Float`). The counting metrics can also be
//! evaluated in exact rational arithmetic; see [`ExactRatio`].

pub mod codec;
pub mod embedding;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod retrieval;
pub mod scalar;

pub use codec::{decode, encode, load_embeddings, load_ids, read_header, save_embeddings, save_ids, PembHeader};
pub use embedding::{l2_normalize, EmbeddingMatrix, NORM_TOLERANCE};
pub use error::{Error, Result};
pub use manifest::{validate_manifest, BenchmarkKind, BenchmarkManifest, LoadedBenchmark, ValidationSummary, Violation};
pub use metrics::report::MetricReport;
pub use retrieval::{cosine_topk, expand_query, retrieve_expanded, QueryExpansionSet, RankedList};
pub use scalar::Scalar;

/// Exact rational scalar for the counting metrics (AO@k, JS@k).
pub type ExactRatio = num_rational::Ratio<i64>;

/// Double-precision instantiation used by every reduction in the evaluation
/// pipeline.
pub type Real = f64;
