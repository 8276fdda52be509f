//! Metrics, the repeated balanced cross-validation protocol, McNemar tests
//! and result files.

mod mcnemar;
mod metrics;
mod model;
mod protocol;
mod results;

pub use mcnemar::{
    corrected_chi2, decide_hypothesis, exact_p_value, mcnemar, mcnemar_counts, mcnemar_per_run, Decision,
    McNemarMethod, McNemarResult, EXACT_LIMIT,
};
pub use metrics::{compute_metrics, ConfusionMatrix, Degenerate, MetricReport};
pub use model::{Fitted, TrainedModel};
pub use protocol::{
    fit_predict, run_protocol, target, CellFailure, FeatureSet, InstanceRecord, ModelSpec, ProtocolContext,
    ProtocolOutcome, RunRecord,
};
pub use results::{
    compare, default_comparisons, read_comparisons, read_runs, read_summaries, read_summary, render_report,
    run_path, summarize, write_comparison, write_runs, write_summary, Comparison, MetricMeans, PerRun, Summary,
};
