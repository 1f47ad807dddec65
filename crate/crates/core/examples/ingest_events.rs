//! Turn a raw timestamped event log into hourly episodes.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rational_attention::data::{aggregate_events, SensorChannel};

const LOG: &str = "\
timestamp,channel
2024-03-01T02:10:00,bathroom
2024-03-01T02:40:00,bathroom
2024-03-01 07:15:00,kettle
2024-03-01T07:16:30,fridge
yesterday,bathroom
2024-03-02T03:05:00,bathroom
2024-03-02T12:00:00,garage
";

fn main() -> std::io::Result<()> {
    let labels = BTreeMap::from([(NaiveDate::from_ymd_opt(2024, 3, 1).unwrap(), 1)]);
    let report = aggregate_events(LOG.as_bytes(), &labels)?;
    for e in &report.errors {
        println!("line {}: {}", e.line, e.message);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    for ep in &report.episodes {
        let events: f64 = ep.matrix.iter().sum();
        println!(
            "{} label={} events={events} bathroom@02={}",
            ep.id,
            ep.label,
            ep.count(2, SensorChannel::Bathroom)
        );
    }
    Ok(())
}
