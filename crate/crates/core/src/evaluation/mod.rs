//! Evaluation harness: recommendation metrics, cluster-validity indexes, the
//! fold-based experiment protocol, and report generation.

mod experiment;
mod metrics;
mod protocol;
mod validity;

pub use experiment::{
    run_experiment, ClusterMethodConfig, ClusteringSection, DatasetStatsSection, EvaluationReport,
    ExclusionCounts, ExperimentConfig, FoldReport, MethodMetrics, MetricRow, ProtocolSection,
    Timings,
};
pub use metrics::{f_measure, precision_at_k, recall_at_k};
pub use protocol::{
    split_folds, split_profile, ExclusionReason, FoldPlan, ProfileSplit, RelevanceMode,
};
pub use validity::{db_index, dunn_index, dunn_index_conventional};
