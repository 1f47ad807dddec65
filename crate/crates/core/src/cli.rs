//! The `rattn` command line.
//!
//! Every subcommand writes into an output directory (`--out-dir`, else the
//! `RATTN_OUT_DIR` environment variable, else the working directory) and
//! prints one `key=value` summary line on success. Exit status is 0 on
//! success, 2 on usage errors and 1 on runtime errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{aggregate_events, dataset_fingerprint, generate_dataset, read_dataset, split, write_dataset, Episode, ScenarioConfig, CHANNELS};
use crate::eval::{auc_pr, auc_roc, evaluate, explain, pr_points, roc_points, run_ablation, write_heatmaps_csv, ScoredSet};
use crate::model::{Model, ModelKind};
use crate::train::{train_with_progress, Checkpoint, Estimator, EvalMask, ModelConfig, TrainError};

#[derive(Debug, Parser)]
#[command(name = "rattn", version, about = "Rationalising attention classifier for in-home sensor episodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and split it into train and test files.
    GenData(GenDataArgs),
    /// Aggregate a raw `timestamp,channel` event log into daily episodes.
    Aggregate(AggregateArgs),
    /// Train a model and write its checkpoints and trace.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint, or score a `score,label` file.
    Eval(EvalArgs),
    /// Train the full model and its five single-component ablations.
    Ablate(AblateArgs),
    /// Export per-episode rationale masks and attention heatmaps.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Output directory.
    #[arg(long, env = "RATTN_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    /// Fraction of episodes in the train split.
    #[arg(long, default_value_t = 209.0 / 312.0)]
    pub train_fraction: f64,
    /// TOML file with scenario parameters; flags override it.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// CSV of `date,label` rows (YYYY-MM-DD).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "episodes.csv")]
    pub output: String,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    /// TOML file with model configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda_sparsity: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    #[arg(long, value_enum)]
    pub eval_mask: Option<EvalMask>,
    #[arg(long)]
    pub no_rational: bool,
    #[arg(long)]
    pub no_attention: bool,
    #[arg(long)]
    pub no_residual: bool,
    #[arg(long)]
    pub no_focal: bool,
    #[arg(long)]
    pub no_pe: bool,
}

impl ModelFlags {
    pub fn resolve(&self) -> Result<ModelConfig> {
        let mut cfg = match &self.config {
            Some(path) => ModelConfig::from_toml_file(path)?,
            None => ModelConfig::default(),
        };
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.lambda_sparsity {
            cfg.lambda_sparsity = v;
        }
        if let Some(v) = self.estimator {
            cfg.estimator = v;
        }
        if let Some(v) = self.eval_mask {
            cfg.eval_mask = v;
        }
        cfg.variant.rational &= !self.no_rational;
        cfg.variant.attention &= !self.no_attention;
        cfg.variant.residual &= !self.no_residual;
        cfg.variant.focal &= !self.no_focal;
        cfg.variant.pe &= !self.no_pe;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "proposed")]
    pub model: ModelKind,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub flags: ModelFlags,
    /// Prefix for the files written.
    #[arg(long)]
    pub name: Option<String>,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    pub verbose: bool,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, requires = "data", conflicts_with = "scores")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV with `score,label` columns, scored directly.
    #[arg(long, required_unless_present = "checkpoint")]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub eval_mask: Option<EvalMask>,
    #[arg(long, default_value = "eval")]
    pub name: String,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub flags: ModelFlags,
    /// Seeds to average over, comma separated; defaults to the config seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Concurrent training runs.
    #[arg(long, default_value_t = 6)]
    pub jobs: usize,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
}

/// Provenance written next to the artifacts of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// SHA-256 of each input dataset, keyed by role.
    pub datasets: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub started_unix: u64,
    pub elapsed_seconds: Option<f64>,
}

impl RunManifest {
    fn new(command: &str, config: impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            datasets: BTreeMap::new(),
            artifacts: Vec::new(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            elapsed_seconds: None,
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Vec<Episode>> {
    let file = File::open(path).with_context(|| format!("cannot open dataset {}", path.display()))?;
    read_dataset(BufReader::new(file)).with_context(|| format!("cannot read dataset {}", path.display()))
}

fn save_dataset(path: &Path, episodes: &[Episode]) -> Result<()> {
    write_dataset(create(path)?, episodes).with_context(|| format!("cannot write {}", path.display()))
}

fn prevalence(episodes: &[Episode]) -> f64 {
    episodes.iter().filter(|e| e.is_positive()).count() as f64 / episodes.len().max(1) as f64
}

fn write_points(path: &Path, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for (a, b) in points {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn check_features(model: &Model, checkpoint: &Path) -> Result<()> {
    if model.features() != CHANNELS {
        bail!(
            "checkpoint {} expects {} features per hour but datasets have {CHANNELS} channels",
            checkpoint.display(),
            model.features()
        );
    }
    Ok(())
}

fn name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<String> {
    let mut cfg = match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid scenario file {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(n) = args.episodes {
        cfg.n_episodes = n;
    }
    if let Some(f) = args.positive_fraction {
        cfg.positive_fraction = f;
    }
    let data = generate_dataset(&cfg)?;
    let (train, test) = split(&data, args.train_fraction, cfg.seed)?;
    let dir = &args.out.out_dir;
    prepare_dir(dir)?;
    let mut manifest = RunManifest::new("gen-data", &cfg, Some(cfg.seed))?;
    let started = Instant::now();
    save_dataset(&dir.join("train.csv"), &train)?;
    save_dataset(&dir.join("test.csv"), &test)?;
    manifest.datasets.insert("train".into(), dataset_fingerprint(&train));
    manifest.datasets.insert("test".into(), dataset_fingerprint(&test));
    manifest.artifacts = vec!["train.csv".into(), "test.csv".into()];
    manifest.elapsed_seconds = Some(started.elapsed().as_secs_f64());
    manifest.write(&dir.join("gen-data.manifest.json"))?;
    Ok(format!(
        "gen-data episodes={} train={} test={} train_prevalence={:.4} test_prevalence={:.4}",
        data.len(),
        train.len(),
        test.len(),
        prevalence(&train),
        prevalence(&test)
    ))
}

pub fn cmd_aggregate(args: &AggregateArgs) -> Result<String> {
    let mut labels = BTreeMap::new();
    if let Some(path) = &args.labels {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .with_context(|| format!("cannot open labels {}", path.display()))?;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if i == 0 && rec.get(0) == Some("date") {
                continue;
            }
            let (Some(date), Some(label)) = (rec.get(0), rec.get(1)) else {
                bail!("labels line {}: expected `date,label`", i + 1);
            };
            let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
                .with_context(|| format!("labels line {}: bad date {date:?}", i + 1))?;
            let label: u8 = match label.trim() {
                "0" => 0,
                "1" => 1,
                other => bail!("labels line {}: label {other:?} is not 0 or 1", i + 1),
            };
            labels.insert(date, label);
        }
    }
    let file = File::open(&args.events).with_context(|| format!("cannot open {}", args.events.display()))?;
    let report = aggregate_events(BufReader::new(file), &labels)?;
    for e in &report.errors {
        eprintln!("{}:{}: {}", args.events.display(), e.line, e.message);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let dir = &args.out.out_dir;
    prepare_dir(dir)?;
    save_dataset(&dir.join(&args.output), &report.episodes)?;
    Ok(format!(
        "aggregate episodes={} rejected_lines={} output={}",
        report.episodes.len(),
        report.errors.len(),
        args.output
    ))
}

pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let cfg = args.flags.resolve()?;
    let train_set = load_dataset(&args.train)?;
    let test_set = load_dataset(&args.test)?;
    let dir = &args.out.out_dir;
    prepare_dir(dir)?;
    let prefix = args.name.clone().unwrap_or_else(|| args.model.name().to_string());
    let file = |suffix: &str| format!("{prefix}.{suffix}");

    let mut manifest = RunManifest::new("train", &cfg, Some(cfg.seed))?;
    manifest.datasets.insert("train".into(), dataset_fingerprint(&train_set));
    manifest.datasets.insert("test".into(), dataset_fingerprint(&test_set));
    manifest.artifacts = vec![file("trace.csv"), file("final.ckpt.json"), file("best.ckpt.json")];
    let manifest_name = file("manifest.json");
    let manifest_path = dir.join(&manifest_name);
    manifest.write(&manifest_path)?;
    let started = Instant::now();

    let model = Model::new(args.model, &cfg)?;
    let verbose = args.verbose;
    let result = train_with_progress(model, &train_set, &test_set, |r| {
        if verbose {
            eprintln!(
                "epoch {} loss={:.5} selection={:.3} test_auc_roc={:.4} test_auc_pr={:.4}",
                r.epoch, r.total_loss, r.selection_rate, r.test_auc_roc, r.test_auc_pr
            );
        }
    });
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::Diverged {
            epoch,
            batch,
            sample,
            message,
            mut last_good,
            trace,
        }) => {
            last_good.manifest = Some(manifest_name.clone());
            last_good.save(&dir.join(file("last_good.ckpt.json")))?;
            trace.write_csv(create(&dir.join(file("trace.csv")))?)?;
            bail!("training diverged at epoch {epoch}, batch {batch}, sample {sample:?}: {message}; last good weights saved");
        }
        Err(e) => return Err(e.into()),
    };
    outcome.trace.write_csv(create(&dir.join(file("trace.csv")))?)?;
    for (ckpt, suffix) in [(&outcome.final_checkpoint, "final.ckpt.json"), (&outcome.best_checkpoint, "best.ckpt.json")] {
        let mut ckpt = ckpt.clone();
        ckpt.manifest = Some(manifest_name.clone());
        ckpt.save(&dir.join(file(suffix)))?;
    }
    manifest.elapsed_seconds = Some(started.elapsed().as_secs_f64());
    manifest.write(&manifest_path)?;
    let (roc, pr) = outcome.trace.last().map_or((f64::NAN, f64::NAN), |r| (r.test_auc_roc, r.test_auc_pr));
    Ok(format!(
        "train model={} epochs={} test_auc_roc={roc:.4} test_auc_pr={pr:.4} best_epoch={}",
        args.model,
        outcome.trace.len(),
        outcome.best_checkpoint.epoch
    ))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let dir = &args.out.out_dir;
    prepare_dir(dir)?;
    let file = |suffix: &str| dir.join(format!("{}.{suffix}", args.name));
    if let Some(path) = &args.scores {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for rec in r.deserialize::<(f64, u8)>() {
            let (s, l) = rec.with_context(|| format!("{}: expected `score,label` rows", path.display()))?;
            scores.push(s);
            labels.push(l);
        }
        let set = ScoredSet::new(scores, labels)?;
        let (roc, pr) = (auc_roc(&set)?, auc_pr(&set)?);
        write_points(&file("roc.csv"), ["fpr", "tpr"], &roc_points(&set)?)?;
        write_points(&file("pr.csv"), ["recall", "precision"], &pr_points(&set)?)?;
        return Ok(format!("eval n={} auc_roc={roc:.4} auc_pr={pr:.4}", set.len()));
    }
    let (Some(ckpt_path), Some(data_path)) = (&args.checkpoint, &args.data) else {
        bail!("eval needs --checkpoint with --data, or --scores");
    };
    let ckpt = Checkpoint::load(ckpt_path).with_context(|| format!("cannot load checkpoint {}", ckpt_path.display()))?;
    let model = ckpt.model()?;
    check_features(&model, ckpt_path)?;
    let data = load_dataset(data_path)?;
    let mode = args.eval_mask.unwrap_or(model.config().eval_mask);
    let report = evaluate(&model, &data, mode)?;
    write_json(&file("report.json"), &report)?;
    write_points(&file("roc.csv"), ["fpr", "tpr"], &report.roc_points)?;
    write_points(&file("pr.csv"), ["recall", "precision"], &report.pr_points)?;
    Ok(format!(
        "eval model={} n={} auc_roc={:.4} auc_pr={:.4}",
        report.model, report.episodes, report.auc_roc, report.auc_pr
    ))
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<String> {
    let cfg = args.flags.resolve()?;
    let seeds = if args.seeds.is_empty() { vec![cfg.seed] } else { args.seeds.clone() };
    let train_set = load_dataset(&args.train)?;
    let test_set = load_dataset(&args.test)?;
    let dir = &args.out.out_dir;
    prepare_dir(dir)?;
    let mut manifest = RunManifest::new("ablate", &cfg, Some(cfg.seed))?;
    manifest.datasets.insert("train".into(), dataset_fingerprint(&train_set));
    manifest.datasets.insert("test".into(), dataset_fingerprint(&test_set));
    manifest.artifacts.push("ablation.csv".into());
    manifest.artifacts.push("ablation.json".into());
    manifest.write(&dir.join("ablate.manifest.json"))?;
    let started = Instant::now();

    let report = run_ablation(&cfg, &seeds, &train_set, &test_set, args.jobs)?;
    report.write_csv(create(&dir.join("ablation.csv"))?)?;
    write_json(&dir.join("ablation.json"), &report)?;
    for arm in &report.arms {
        for run in &arm.runs {
            let trace = format!("trace_{}_seed{}.csv", arm.name, run.seed);
            run.trace.write_csv(create(&dir.join(&trace))?)?;
            manifest.artifacts.push(trace);
        }
    }
    manifest.elapsed_seconds = Some(started.elapsed().as_secs_f64());
    manifest.write(&dir.join("ablate.manifest.json"))?;
    let summary: Vec<String> = report
        .arms
        .iter()
        .map(|a| format!("{}={:.4}/{:.4}", a.name, a.mean_auc_roc(), a.mean_auc_pr()))
        .collect();
    Ok(format!("ablate arms={} seeds={} {}", report.arms.len(), seeds.len(), summary.join(" ")))
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<String> {
    let ckpt = Checkpoint::load(&args.checkpoint).with_context(|| format!("cannot load checkpoint {}", args.checkpoint.display()))?;
    let model = ckpt.model()?;
    check_features(&model, &args.checkpoint)?;
    let data = load_dataset(&args.data)?;
    let explanations = explain(&model, &data)?;
    let dir = &args.out.out_dir;
    prepare_dir(dir)?;
    write_json(&dir.join("explanations.json"), &explanations)?;
    write_heatmaps_csv(create(&dir.join("heatmaps.csv"))?, &explanations)?;
    Ok(format!(
        "explain records={} checkpoint={}",
        explanations.len(),
        name(&args.checkpoint)
    ))
}

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Explain(a) => cmd_explain(a),
    }
}

/// Parses `std::env::args`, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
