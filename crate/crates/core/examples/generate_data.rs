//! Generate the synthetic cohort, split it and write both halves as CSV.
//!
//! cargo run --example generate_data -- [out_dir]

use std::fs::File;
use std::path::PathBuf;

use rational_attention::data::{dataset_fingerprint, generate_dataset, split, write_dataset, ScenarioConfig, SensorChannel};

fn main() -> anyhow::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| ".".into()).into();
    let cfg = ScenarioConfig::default();
    let data = generate_dataset(&cfg)?;
    let (train, test) = split(&data, 209.0 / 312.0, cfg.seed)?;

    write_dataset(File::create(out.join("train.csv"))?, &train)?;
    write_dataset(File::create(out.join("test.csv"))?, &test)?;

    let night = |positive: bool| {
        let group: Vec<_> = data.iter().filter(|e| e.is_positive() == positive).collect();
        let total: f64 = group
            .iter()
            .map(|e| (0..6).map(|h| e.count(h, SensorChannel::Bathroom)).sum::<f64>())
            .sum();
        total / group.len() as f64
    };
    println!("episodes {} (train {}, test {})", data.len(), train.len(), test.len());
    println!("mean night bathroom events: positive {:.2}, negative {:.2}", night(true), night(false));
    println!("fingerprint {}", dataset_fingerprint(&data));
    Ok(())
}
