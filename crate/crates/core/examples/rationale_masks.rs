//! Sample, threshold and score rationale masks from an untrained model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rational_attention::data::{generate_dataset, ScenarioConfig, CHANNELS, HOURS};
use rational_attention::model::{MaskMode, Model, ModelKind};
use rational_attention::train::ModelConfig;
use rational_attention::Tensor;

fn main() -> anyhow::Result<()> {
    let episode = generate_dataset(&ScenarioConfig { n_episodes: 4, ..Default::default() })?.remove(0);
    let model = Model::new(ModelKind::Proposed, &ModelConfig::default())?;
    let x = Tensor::new(vec![HOURS, CHANNELS], episode.matrix.iter().map(|c| c.ln_1p()).collect())?;
    let encoded = model.encode(&x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let show = |z: &[u8]| z.iter().map(|&v| if v == 1 { '#' } else { '.' }).collect::<String>();
    for mode in [MaskMode::Threshold, MaskMode::Sample, MaskMode::Sample] {
        let mask = model.generate_mask(&encoded, mode, &mut rng)?;
        let out = model.classify(&encoded, &mask)?;
        println!(
            "{mode:?}\t{} selected={:>2} log_prob={:>8.3} p(pos)={:.4}",
            show(&mask.z),
            mask.selected(),
            mask.log_prob(),
            out.prob_positive
        );
    }
    Ok(())
}
