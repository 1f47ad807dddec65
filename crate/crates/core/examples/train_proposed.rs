//! Train the rationalised attention model on the synthetic cohort and save a checkpoint.
//!
//! cargo run --release --example train_proposed -- [epochs] [seed]

use rational_attention::data::{generate_dataset, split, ScenarioConfig};
use rational_attention::eval::evaluate;
use rational_attention::model::{Model, ModelKind};
use rational_attention::train::{train_with_progress, EvalMask, ModelConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let data = generate_dataset(&ScenarioConfig::default())?;
    let (train, test) = split(&data, 209.0 / 312.0, 7)?;
    let cfg = ModelConfig { epochs, seed, ..Default::default() };
    let model = Model::new(ModelKind::Proposed, &cfg)?;

    let outcome = train_with_progress(model, &train, &test, |r| {
        println!(
            "epoch {:>3} loss {:.4} selection {:.3} test auc_roc {:.4} auc_pr {:.4}",
            r.epoch, r.total_loss, r.selection_rate, r.test_auc_roc, r.test_auc_pr
        );
    })?;

    let path = std::env::temp_dir().join("proposed.ckpt.json");
    outcome.final_checkpoint.save(&path)?;
    let report = evaluate(&outcome.final_checkpoint.model()?, &test, EvalMask::Threshold)?;
    println!(
        "final: auc_roc {:.4} auc_pr {:.4} mean selection {:.3}; checkpoint at {}",
        report.auc_roc,
        report.auc_pr,
        report.selection_rate_mean.unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}
