//! Brute-force oracles shared by integration tests.
#![allow(dead_code)]

/// Mann-Whitney over every positive/negative pair, half credit for ties.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    credit += 1.0;
                } else if scores[i] == scores[j] {
                    credit += 0.5;
                }
            }
        }
    }
    credit / pairs
}

/// Step-wise PR area from an explicit threshold sweep: for each distinct
/// score, count everything scored at or above it.
pub fn swept_pr_area(scores: &[f64], labels: &[u8]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for th in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= th {
                if l == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        area += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    area
}
