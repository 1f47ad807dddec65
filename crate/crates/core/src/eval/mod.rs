//! Ranking metrics, evaluation reports, ablations and rationale explanations.

mod ablation;
mod explain;
mod metrics;
mod report;

pub use ablation::{run_ablation, AblationArm, AblationReport, ArmRun};
pub use explain::{explain, mean_attribution, write_heatmaps_csv, ExplainError, Explanation};
pub use metrics::{auc_pr, auc_roc, pr_points, roc_points, MetricError, ScoredSet};
pub use report::{evaluate, EpisodeScore, EvalError, EvaluationReport};
