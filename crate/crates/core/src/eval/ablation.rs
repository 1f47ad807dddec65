use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Episode;
use crate::model::ModelKind;
use crate::train::{train, ModelConfig, TrainError, TrainTrace, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub seed: u64,
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub trace: TrainTrace,
}

/// One ablation arm: the full model or the full model minus one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub name: String,
    pub variant: Variant,
    pub runs: Vec<ArmRun>,
}

impl AblationArm {
    pub fn mean_auc_roc(&self) -> f64 {
        self.runs.iter().map(|r| r.auc_roc).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_auc_pr(&self) -> f64 {
        self.runs.iter().map(|r| r.auc_pr).sum::<f64>() / self.runs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<AblationArm>,
}

impl AblationReport {
    pub fn arm(&self, name: &str) -> Option<&AblationArm> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// Six rows `variant,auc_roc,auc_pr,seeds`, AUCs from the final epoch
    /// on the test split, averaged over seeds.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["variant", "auc_roc", "auc_pr", "seeds"])?;
        for arm in &self.arms {
            let seeds: Vec<String> = arm.runs.iter().map(|r| r.seed.to_string()).collect();
            w.write_record([
                arm.name.clone(),
                arm.mean_auc_roc().to_string(),
                arm.mean_auc_pr().to_string(),
                seeds.join(" "),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains the six arms of [`Variant::ablation_arms`] once per seed on the same
/// split, running up to `jobs` trainings at a time. Each run owns its RNGs, so
/// results do not depend on `jobs`.
pub fn run_ablation(
    config: &ModelConfig,
    seeds: &[u64],
    train_set: &[Episode],
    test_set: &[Episode],
    jobs: usize,
) -> Result<AblationReport, TrainError> {
    let arms = Variant::ablation_arms();
    let tasks: Vec<(usize, u64)> = (0..arms.len()).flat_map(|a| seeds.iter().map(move |&s| (a, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<ArmRun, TrainError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(a, seed)| {
                let cfg = ModelConfig {
                    seed,
                    variant: arms[a].1,
                    ..config.clone()
                };
                let out = train(ModelKind::Proposed, &cfg, train_set, test_set)?;
                let last = out.trace.last().copied();
                Ok(ArmRun {
                    seed,
                    auc_roc: last.map_or(f64::NAN, |r| r.test_auc_roc),
                    auc_pr: last.map_or(f64::NAN, |r| r.test_auc_pr),
                    trace: out.trace,
                })
            })
            .collect()
    });
    let mut results = results.into_iter();
    let mut report = AblationReport { arms: Vec::new() };
    for (name, variant) in arms {
        let runs = results.by_ref().take(seeds.len()).collect::<Result<Vec<_>, _>>()?;
        report.arms.push(AblationArm {
            name: name.to_string(),
            variant,
            runs,
        });
    }
    Ok(report)
}
