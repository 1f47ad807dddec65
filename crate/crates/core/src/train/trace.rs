use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

/// Per-epoch training record. AUCs are NaN when a split holds one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total_loss: f64,
    pub focal_loss: f64,
    pub sparsity_loss: f64,
    /// Mean fraction of sampled timesteps kept during the epoch.
    pub selection_rate: f64,
    /// Mean generator probability during the epoch.
    pub expected_selection_rate: f64,
    /// Fraction of timesteps kept by evaluation masks on the test split.
    pub test_selection_rate: f64,
    pub train_auc_roc: f64,
    pub train_auc_pr: f64,
    pub test_auc_roc: f64,
    pub test_auc_pr: f64,
}

/// Training history. Written as CSV with one header row naming the
/// [`EpochRecord`] fields; epochs count from 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.records.is_empty() {
            w.write_record([
                "epoch",
                "total_loss",
                "focal_loss",
                "sparsity_loss",
                "selection_rate",
                "expected_selection_rate",
                "test_selection_rate",
                "train_auc_roc",
                "train_auc_pr",
                "test_auc_roc",
                "test_auc_pr",
            ])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> csv::Result<Self> {
        let records = csv::Reader::from_reader(reader).deserialize().collect::<csv::Result<_>>()?;
        Ok(Self { records })
    }
}
