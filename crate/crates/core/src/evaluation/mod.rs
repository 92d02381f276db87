//! Reranking, ranking metrics, significance testing and cross-validation.

pub mod cv;
pub mod metrics;
pub mod rerank;
pub mod significance;

pub use cv::cross_validate;
pub use metrics::{mrr_at_k, ndcg_at_k, MetricResult};
pub use rerank::{rerank, PairScorer, PromptRanker};
pub use significance::{paired_significance, paired_significance_with, SignificanceResult};
