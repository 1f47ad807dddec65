//! AUC-ROC and AUC-PR on a small hand-made ranking, with the curve points.

use rational_attention::eval::{auc_pr, auc_roc, pr_points, roc_points, ScoredSet};

fn main() -> Result<(), rational_attention::eval::MetricError> {
    let scores = vec![0.9, 0.8, 0.7, 0.6, 0.55, 0.5, 0.4, 0.3, 0.2, 0.1];
    let labels = vec![1, 1, 0, 1, 0, 0, 1, 0, 0, 0];
    let set = ScoredSet::new(scores, labels)?;

    println!("auc_roc {:.4}", auc_roc(&set)?);
    println!("auc_pr  {:.4}", auc_pr(&set)?);
    println!("roc (fpr, tpr):");
    for (fpr, tpr) in roc_points(&set)? {
        println!("  {fpr:.3} {tpr:.3}");
    }
    println!("pr (recall, precision):");
    for (r, p) in pr_points(&set)? {
        println!("  {r:.3} {p:.3}");
    }
    Ok(())
}
