//! Evaluation metrics.
//!
//! Rank-similarity values are reported in `[0, 1]`; table formatting is what
//! scales them by 100.

pub mod benchmark;
pub mod correlation;
pub mod ir;
pub mod rank;
pub mod report;

pub use benchmark::{
    eval_classification, eval_paraphrase, eval_paraphrase_benchmark, eval_retrieval, eval_sts, evaluate_manifest,
    RECALL_DEPTHS,
};
pub use correlation::{pearson, spearman, LabeledSimilarityPairs};
pub use ir::{recall_at_k, rsum, topk_accuracy};
pub use rank::{average_overlap, average_overlap_in, jaccard_at_k, jaccard_at_k_in, kendall_tau, spearman_rank};
pub use report::{pairwise_sum, MetricReport};
