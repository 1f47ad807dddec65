//! Run the six ablation arms over two seeds and print the summary table.

use rational_attention::data::{generate_dataset, split, ScenarioConfig};
use rational_attention::eval::run_ablation;
use rational_attention::train::ModelConfig;

fn main() -> anyhow::Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let data = generate_dataset(&ScenarioConfig::default())?;
    let (train, test) = split(&data, 209.0 / 312.0, 7)?;
    let cfg = ModelConfig { epochs, ..Default::default() };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());

    let report = run_ablation(&cfg, &[0, 1], &train, &test, jobs)?;
    report.write_csv(std::io::stdout())?;
    Ok(())
}
