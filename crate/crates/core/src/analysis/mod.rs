//! Age clustering, t-SNE embedding, evaluation metrics and Brain-EAD summaries.

pub mod kmeans;
pub mod metrics;
pub mod tsne;

pub use kmeans::{kmeans_1d, AgeGroup, Cluster, ClusterSummary};
pub use metrics::{bias_summary, box_stats, metrics, subgroup_eval, BiasSummary, BoxStats, EvalReport};
pub use tsne::{tsne_embed, Embedding2D, TsneParams};
