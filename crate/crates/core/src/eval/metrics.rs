//! Ranking metrics.
//!
//! Thresholds are the distinct scores, visited from high to low; equal scores
//! enter the positive set together. ROC area is the trapezoid rule over those
//! points, which equals the Mann-Whitney statistic with half credit for tied
//! positive/negative pairs. PR area is step-wise average precision,
//! `Σ_k (R_k - R_{k-1}) P_k` with `R_0 = 0`, no interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("labels must be 0 or 1, got {0}")]
    BadLabel(u8),
    #[error("scores must be finite")]
    NonFinite,
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
}

/// Parallel scores and binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, MetricError> {
        if scores.len() != labels.len() {
            return Err(MetricError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(MetricError::BadLabel(l));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Cumulative (true positives, false positives) after each distinct
    /// threshold, highest first.
    fn sweep(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (k, &i) in order.iter().enumerate() {
            if self.labels[i] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_group = order.get(k + 1).map_or(true, |&j| self.scores[j] != self.scores[i]);
            if last_of_group {
                out.push((tp, fp));
            }
        }
        out
    }
}

/// ROC curve as (false positive rate, true positive rate), from (0, 0) to (1, 1).
pub fn roc_points(s: &ScoredSet) -> Result<Vec<(f64, f64)>, MetricError> {
    let (p, n) = (s.positives(), s.negatives());
    if p == 0 || n == 0 {
        return Err(MetricError::Undefined("ROC needs both classes"));
    }
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(s.sweep().into_iter().map(|(tp, fp)| (fp as f64 / n as f64, tp as f64 / p as f64)));
    Ok(pts)
}

pub fn auc_roc(s: &ScoredSet) -> Result<f64, MetricError> {
    let pts = roc_points(s)?;
    Ok(pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

/// Precision-recall points as (recall, precision), one per distinct threshold.
pub fn pr_points(s: &ScoredSet) -> Result<Vec<(f64, f64)>, MetricError> {
    let p = s.positives();
    if p == 0 {
        return Err(MetricError::Undefined("PR needs at least one positive"));
    }
    Ok(s.sweep()
        .into_iter()
        .map(|(tp, fp)| (tp as f64 / p as f64, tp as f64 / (tp + fp) as f64))
        .collect())
}

pub fn auc_pr(s: &ScoredSet) -> Result<f64, MetricError> {
    let mut prev = 0.0;
    let mut area = 0.0;
    for (recall, precision) in pr_points(s)? {
        area += (recall - prev) * precision;
        prev = recall;
    }
    Ok(area)
}
