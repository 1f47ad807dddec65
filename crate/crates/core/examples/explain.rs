//! Train briefly, then print per-sensor attributions and the hours kept by the rationale.

use rational_attention::data::{generate_dataset, split, ScenarioConfig, SensorChannel};
use rational_attention::eval::{explain, mean_attribution};
use rational_attention::model::ModelKind;
use rational_attention::train::{train, ModelConfig};

fn main() -> anyhow::Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(15);
    let data = generate_dataset(&ScenarioConfig::default())?;
    let (train_set, test_set) = split(&data, 209.0 / 312.0, 7)?;
    let cfg = ModelConfig { epochs, ..Default::default() };
    let model = train(ModelKind::Proposed, &cfg, &train_set, &test_set)?.final_checkpoint.model()?;

    let explanations = explain(&model, &test_set)?;
    println!("{:<14} {:>9} {:>9}", "sensor", "positive", "negative");
    for c in SensorChannel::ALL {
        let pos = mean_attribution(&explanations, c, 1).unwrap_or(f64::NAN);
        let neg = mean_attribution(&explanations, c, 0).unwrap_or(f64::NAN);
        println!("{:<14} {pos:>9.4} {neg:>9.4}", c.name());
    }
    if let Some(ex) = explanations.iter().find(|e| e.label == 1) {
        let hours: String = ex.mask.iter().map(|&z| if z == 1 { '#' } else { '.' }).collect();
        println!("{} p(pos)={:.3} hours {hours}", ex.episode_id, ex.prob_positive);
    }
    Ok(())
}
