//! Dataset file format.
//!
//! CSV with a header row. Columns: `id`, `label` (0/1), then the 192 counts
//! named `hHH_<channel>` in hour-major order with channels in
//! [`SensorChannel`] index order, then a free-form `meta` column. Counts are
//! non-negative integers.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{Episode, SensorChannel, CHANNELS, HOURS};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed csv")]
    Csv(#[from] csv::Error),
    #[error("dataset io failed")]
    Io(#[from] std::io::Error),
    #[error("record {record}: {msg}")]
    Record { record: usize, msg: String },
    #[error("header does not match the expected 24 x 8 layout")]
    Header,
}

pub fn header() -> Vec<String> {
    let mut cols = vec!["id".to_string(), "label".to_string()];
    for hour in 0..HOURS {
        for ch in SensorChannel::ALL {
            cols.push(format!("h{hour:02}_{}", ch.name()));
        }
    }
    cols.push("meta".to_string());
    cols
}

pub fn write_dataset<W: Write>(writer: W, episodes: &[Episode]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header())?;
    for e in episodes {
        let mut row = vec![e.id.clone(), e.label.to_string()];
        row.extend(e.matrix.iter().map(|c| c.to_string()));
        row.push(e.meta.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<Episode>, DatasetError> {
    let mut r = csv::Reader::from_reader(reader);
    let expected = header();
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(DatasetError::Header);
    }
    let mut episodes = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let err = |msg: String| DatasetError::Record { record: i + 1, msg };
        let label: u8 = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("label {other:?} is not 0 or 1"))),
        };
        let mut matrix = Vec::with_capacity(HOURS * CHANNELS);
        for (j, field) in record.iter().skip(2).take(HOURS * CHANNELS).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(format!("column {}: {field:?} is not a number", expected[j + 2])))?;
            if !(v >= 0.0 && v.fract() == 0.0 && v.is_finite()) {
                return Err(err(format!("column {}: {v} is not a non-negative integer count", expected[j + 2])));
            }
            matrix.push(v);
        }
        let meta = record.get(2 + HOURS * CHANNELS).filter(|m| !m.is_empty()).map(str::to_string);
        episodes.push(Episode {
            id: record[0].to_string(),
            matrix,
            label,
            meta,
        });
    }
    Ok(episodes)
}

/// SHA-256 of the serialised dataset, hex encoded.
pub fn dataset_fingerprint(episodes: &[Episode]) -> String {
    let mut buf = Vec::new();
    write_dataset(&mut buf, episodes).expect("writing to memory");
    hex::encode(Sha256::digest(&buf))
}
