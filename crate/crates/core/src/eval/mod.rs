//! Splits, metrics and the experiment protocol.

mod experiment;
mod metrics;
mod split;

pub use experiment::{
    ablate_hyperedges, hyperedge_subsets, label_ratio_sweep, run_experiment, subsample,
    EvalReport, ExperimentConfig, ExperimentData, ExperimentTable, FeatureSource, MetricSummary,
    Repetition, DEFAULT_FRACTIONS,
};
pub use metrics::{binary_auc, metrics, ClassMetrics, Metrics};
pub use split::{split, split_sizes, SplitAssignment, DEFAULT_RATIOS};
