//! Aggregation of raw `timestamp,channel` event logs into daily episodes.
//!
//! One event per line. Timestamps are ISO-8601, either naive
//! (`2024-03-01T02:10:00`, a space separator is accepted) or with an offset,
//! in which case the local wall-clock time is used. Days start at midnight of
//! the timestamps as written. An optional `timestamp,channel` header, blank
//! lines and `#` comments are skipped.

use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};
use serde::Serialize;

use crate::data::{Episode, SensorChannel, CHANNELS, HOURS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateReport {
    /// One episode per calendar day, in date order.
    pub episodes: Vec<Episode>,
    pub errors: Vec<LineError>,
    pub warnings: Vec<String>,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Counts events per (day, hour, channel). Days listed in `labels` take that
/// label; other days are labelled 0 and flagged in their `meta`. Bad lines are
/// reported and skipped.
pub fn aggregate_events<R: BufRead>(reader: R, labels: &BTreeMap<NaiveDate, u8>) -> std::io::Result<AggregateReport> {
    let mut days: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    let mut report = AggregateReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || (number == 1 && trimmed.starts_with("timestamp")) {
            continue;
        }
        let mut error = |message: String| report.errors.push(LineError { line: number, message });
        let Some((ts, channel)) = trimmed.split_once(',') else {
            error("expected `timestamp,channel`".into());
            continue;
        };
        let Some(ts) = parse_timestamp(ts.trim()) else {
            error(format!("unparseable timestamp {:?}", ts.trim()));
            continue;
        };
        let channel: SensorChannel = match channel.trim().parse() {
            Ok(c) => c,
            Err(_) => {
                error(format!("unknown channel {:?}", channel.trim()));
                continue;
            }
        };
        let matrix = days.entry(ts.date()).or_insert_with(|| vec![0.0; HOURS * CHANNELS]);
        matrix[ts.hour() as usize * CHANNELS + channel.index()] += 1.0;
    }
    if days.is_empty() {
        report.warnings.push("event log contains no events; dataset is empty".into());
    }
    let unlabelled = days.keys().filter(|d| !labels.contains_key(d)).count();
    if unlabelled > 0 {
        report.warnings.push(format!("{unlabelled} day(s) have no label and were labelled 0"));
    }
    for (date, matrix) in days {
        let mut episode = Episode::new(date.to_string(), matrix, labels.get(&date).copied().unwrap_or(0));
        if !labels.contains_key(&date) {
            episode.meta = Some("unlabelled".into());
        }
        report.episodes.push(episode);
    }
    if !report.errors.is_empty() {
        report.warnings.push(format!("{} line(s) rejected", report.errors.len()));
    }
    Ok(report)
}
