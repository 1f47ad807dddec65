//! Train the three baselines for a few epochs and compare test AUCs.

use rational_attention::data::{generate_dataset, split, ScenarioConfig};
use rational_attention::model::{Model, ModelKind};
use rational_attention::train::{train, ModelConfig};

fn main() -> anyhow::Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let data = generate_dataset(&ScenarioConfig::default())?;
    let (train_set, test_set) = split(&data, 209.0 / 312.0, 7)?;
    let cfg = ModelConfig { epochs, ..Default::default() };

    for kind in [ModelKind::Lstm, ModelKind::Nn, ModelKind::Lr] {
        let params = Model::new(kind, &cfg)?.params().count();
        let outcome = train(kind, &cfg, &train_set, &test_set)?;
        let last = outcome.trace.last().expect("at least one epoch");
        println!(
            "{kind:?}: {params} parameters, test auc_roc {:.4} auc_pr {:.4}",
            last.test_auc_roc, last.test_auc_pr
        );
    }
    Ok(())
}
