//! Focal, cross-entropy and sparsity terms of the training objective.

use crate::model::RationaleMask;
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor};
use crate::train::ConfigError;

/// Probability of the true class is clamped into `[P_CLAMP, 1 - P_CLAMP]`.
pub const P_CLAMP: f64 = 1e-7;

/// Probability the classifier assigns to the true label: `f·y + (1-f)·(1-y)`.
pub fn p_correct(prob_positive: f64, label: f64) -> f64 {
    prob_positive * label + (1.0 - prob_positive) * (1.0 - label)
}

/// `-α (1-p)^β ln p` for the clamped true-class probability `p`.
pub fn focal_loss(p_correct: f64, alpha: f64, beta: f64) -> std::result::Result<f64, ConfigError> {
    check_focal(alpha, beta)?;
    let p = p_correct.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let modulation = if beta == 0.0 { 1.0 } else { (1.0 - p).powf(beta) };
    Ok(-alpha * modulation * p.ln())
}

pub fn cross_entropy(p_correct: f64) -> f64 {
    -p_correct.clamp(P_CLAMP, 1.0 - P_CLAMP).ln()
}

/// `λ · ‖z‖₁`, i.e. λ times the number of selected timesteps.
pub fn sparsity_loss(mask: &RationaleMask, lambda: f64) -> f64 {
    lambda * mask.selected() as f64
}

fn check_focal(alpha: f64, beta: f64) -> std::result::Result<(), ConfigError> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta >= 0.0 && beta.is_finite()) {
        return Err(ConfigError::Invalid(format!(
            "focal loss needs alpha > 0 and beta >= 0, got alpha={alpha}, beta={beta}"
        )));
    }
    Ok(())
}

/// Per-sample focal loss on the tape. `class_probs` is `[B, 2]` (softmax
/// output, column 1 is the positive class); returns a `[B]` vector.
/// With `beta == 0` the modulating factor is skipped entirely, so
/// `alpha = 1, beta = 0` is exactly cross-entropy.
pub fn focal_on_tape(tape: &mut Tape, class_probs: Var, labels: &[f64], alpha: f64, beta: f64) -> Result<Var> {
    let batch = labels.len();
    let onehot: Vec<f64> = labels.iter().flat_map(|&y| [1.0 - y, y]).collect();
    let onehot = tape.constant(Tensor::new(vec![batch, 2], onehot)?);
    let picked = tape.mul(class_probs, onehot)?;
    let p = tape.sum_axis(picked, 1)?;
    let p = tape.clamp(p, P_CLAMP, 1.0 - P_CLAMP)?;
    let log_p = tape.log(p)?;
    let weighted = if beta == 0.0 {
        log_p
    } else {
        let complement = tape.rsub_scalar(1.0, p)?;
        let modulation = tape.powf(complement, beta)?;
        tape.mul(modulation, log_p)?
    };
    tape.scale(weighted, -alpha)
}
