//! Subcommand definitions and their implementations.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hardneg_core::dynamics::{
    step, trajectory as rollout, vector_field, FieldArrow, GridSpec, StepParams,
};
use hardneg_core::eval::{
    collapse_metric_slices, diagram_extract, recall_at_k_slices, RetrievalResult,
};
use hardneg_core::geometry::{normalize, TripletCoord, UnitVector};
use hardneg_core::mining::is_hard;
use hardneg_core::synthdata::{generate, DatasetConfig, LabeledDataset};
use hardneg_core::trainer::{forward, train, GradMode, ModelParams, TrainConfig};
use hardneg_core::{BaseLoss, Batch, LossSpec, MiningStrategy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{
    dataset_csv, diagram_csv, epoch_log_csv, field_csv, parse_dataset, to_json, trajectory_csv,
    triplets_csv, EpochRecord,
};
use crate::manifest::{Recorder, RunManifest};
use crate::svg;

/// Relative output paths are placed under this directory when it is set.
pub const OUT_DIR_ENV: &str = "HARDNEG_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "hardneg",
    version,
    about = "Triplet diagram dynamics and hard-negative training experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Generate a labelled point cloud on the unit sphere.
    GenData(GenDataArgs),
    /// Evaluate one gradient step over a grid of diagram points.
    Simulate(SimulateArgs),
    /// Roll a single diagram point forward for several steps.
    Trajectory(TrajectoryArgs),
    /// Train a linear embedding with mined triplets.
    Train(TrainArgs),
    /// Place every point of a dataset on the triplet diagram.
    Diagram(DiagramArgs),
    /// Recall@K and collapse metric of an embedding.
    Eval(EvalArgs),
    /// Re-run a command from its manifest and compare checksums.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLoss {
    Nca,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLoss {
    Nca,
    Margin,
    Sct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Miner {
    Random,
    Hn,
    Shn,
    Ep,
    Ephn,
}

impl From<Miner> for MiningStrategy {
    fn from(m: Miner) -> Self {
        match m {
            Miner::Random => MiningStrategy::Random,
            Miner::Hn => MiningStrategy::HardNegative,
            Miner::Shn => MiningStrategy::SemiHardNegative,
            Miner::Ep => MiningStrategy::EasyPositive,
            Miner::Ephn => MiningStrategy::EasyPositiveHardNegative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grad {
    Post,
    Through,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Scale of the isotropic noise added to each class centre.
    #[arg(long, default_value_t = 2.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "dataset.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StepArgs {
    #[arg(long, value_enum, default_value_t = StepLoss::Nca)]
    pub loss: StepLoss,
    /// Entanglement strength.
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    /// Plane projection factor.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub gamma: f64,
    /// Learning rate multiplying the loss-specific step weight.
    #[arg(long, default_value_t = 0.1)]
    pub beta_scale: f64,
    /// Hinge margin for the margin loss.
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
}

impl StepArgs {
    fn params(&self) -> StepParams {
        let loss = match self.loss {
            StepLoss::Nca => LossSpec::nca(),
            StepLoss::Margin => LossSpec::margin(self.margin),
        };
        StepParams::new(self.beta_scale, loss)
            .with_gamma(self.gamma)
            .with_entanglement(self.p)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub step: StepArgs,
    /// Grid points per axis.
    #[arg(long, default_value_t = 41)]
    pub resolution: usize,
    #[arg(long, default_value = "field")]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub step: StepArgs,
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    pub start_ap: f64,
    #[arg(long, default_value_t = 0.95, allow_hyphen_values = true)]
    pub start_an: f64,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value = "trajectory")]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset CSV (`label,x0,...`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = TrainLoss::Sct)]
    pub loss: TrainLoss,
    #[arg(long, value_enum, default_value_t = Miner::Hn)]
    pub miner: Miner,
    #[arg(long, value_enum, default_value_t = Grad::Through)]
    pub grad_mode: Grad,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub classes_per_batch: usize,
    #[arg(long, default_value_t = 8)]
    pub embed_dim: usize,
    /// Weight of the hard-triplet term of the SCT loss.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Hinge margin for the margin loss (and the SCT margin base).
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
    /// Loss the SCT loss falls back to on easy triplets.
    #[arg(long, value_enum, default_value_t = StepLoss::Nca)]
    pub sct_base: StepLoss,
    /// Drop the anchor gradient of the SCT hard-triplet term.
    #[arg(long)]
    pub no_sct_anchor_grad: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub snapshot_every: usize,
    /// Hold out every n-th member of each class for Recall@1 (0 evaluates on all points).
    #[arg(long, default_value_t = 0)]
    pub holdout_every: usize,
    #[arg(long, default_value = "train")]
    pub out_prefix: PathBuf,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        let loss = match self.loss {
            TrainLoss::Nca => LossSpec::nca(),
            TrainLoss::Margin => LossSpec::margin(self.margin),
            TrainLoss::Sct => LossSpec::sct(self.lambda)
                .with_base(match self.sct_base {
                    StepLoss::Nca => BaseLoss::Nca,
                    StepLoss::Margin => BaseLoss::Margin,
                })
                .with_margin(self.margin)
                .with_sct_anchor_grad(!self.no_sct_anchor_grad),
        };
        TrainConfig {
            loss,
            strategy: self.miner.into(),
            grad_mode: match self.grad_mode {
                Grad::Post => GradMode::PostProjection,
                Grad::Through => GradMode::ThroughNormalization,
            },
            learning_rate: self.lr,
            epochs: self.epochs,
            classes_per_batch: self.classes_per_batch,
            embed_dim: self.embed_dim,
            seed: self.seed,
            snapshot_every: self.snapshot_every,
            holdout_every: self.holdout_every,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiagramArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model JSON written by `train`; without it the inputs are used as embeddings.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value = "diagram")]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated cut-offs.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub k: Vec<usize>,
    #[arg(long, default_value = "eval")]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest JSON written by a previous run.
    pub manifest: PathBuf,
}

/// What a command did: the files it wrote and the manifest describing them.
#[derive(Debug)]
pub struct Report {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub notes: Vec<String>,
}

fn resolve_output(p: &Path) -> PathBuf {
    let p = match std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
        Some(dir) if p.is_relative() => PathBuf::from(dir).join(p),
        _ => p.to_path_buf(),
    };
    absolute(&p)
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(command: Command) -> CliResult<Report> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Simulate(a) => simulate(a),
        Command::Trajectory(a) => trajectory(a),
        Command::Train(a) => train_cmd(a),
        Command::Diagram(a) => diagram(a),
        Command::Eval(a) => eval(a),
        Command::Replay(a) => replay(a),
    }
}

fn gen_data(mut a: GenDataArgs) -> CliResult<Report> {
    a.out = resolve_output(&a.out);
    let ds = generate(&DatasetConfig {
        num_classes: a.classes,
        per_class: a.per_class,
        input_dim: a.dim,
        intra_spread: a.spread,
        seed: a.seed,
    })?;
    let mut rec = Recorder::default();
    rec.write(&a.out, &dataset_csv(&ds))?;
    let manifest_path = suffixed(&a.out, ".manifest.json");
    let (manifest, manifest_path) = rec.finish(
        "gen-data",
        Some(a.seed),
        &Command::GenData(a.clone()),
        &manifest_path,
    )?;
    Ok(Report {
        manifest,
        manifest_path,
        notes: vec![format!("{} points", ds.len())],
    })
}

fn simulate(mut a: SimulateArgs) -> CliResult<Report> {
    a.out_prefix = resolve_output(&a.out_prefix);
    let params = a.step.params();
    let field = vector_field(GridSpec::full(a.resolution), params)?;
    let title = format!(
        "{} field, gamma={}, p={}, lr={}",
        match a.step.loss {
            StepLoss::Nca => "NCA",
            StepLoss::Margin => "margin",
        },
        a.step.gamma,
        a.step.p,
        a.step.beta_scale
    );
    let mut rec = Recorder::default();
    rec.write(&suffixed(&a.out_prefix, ".csv"), &field_csv(&field))?;
    rec.write(
        &suffixed(&a.out_prefix, ".svg"),
        svg::quiver(&field, &title).as_bytes(),
    )?;
    let path = suffixed(&a.out_prefix, ".manifest.json");
    let (manifest, manifest_path) =
        rec.finish("simulate", None, &Command::Simulate(a.clone()), &path)?;
    Ok(Report {
        manifest,
        manifest_path,
        notes: vec![format!("{} grid points", field.arrows.len())],
    })
}

fn trajectory(mut a: TrajectoryArgs) -> CliResult<Report> {
    a.out_prefix = resolve_output(&a.out_prefix);
    let params = a.step.params();
    let start = TripletCoord::new(a.start_ap, a.start_an)?;
    let points = rollout(start, &params, a.steps)?;
    let mut rows = Vec::with_capacity(points.len());
    for &c in &points {
        let u = step(c, &params)?;
        rows.push(FieldArrow {
            s_ap: c.s_ap,
            s_an: c.s_an,
            d_sap: u.d_sap,
            d_san: u.d_san,
            d_sap_total: u.d_sap_total,
            d_san_total: u.d_san_total,
        });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|c| (c.s_ap, c.s_an)).collect();
    let title = format!(
        "trajectory from ({}, {}), p={}",
        a.start_ap, a.start_an, a.step.p
    );
    let mut rec = Recorder::default();
    rec.write(&suffixed(&a.out_prefix, ".csv"), &trajectory_csv(&rows))?;
    rec.write(
        &suffixed(&a.out_prefix, ".svg"),
        svg::trajectory(&xy, &title).as_bytes(),
    )?;
    let path = suffixed(&a.out_prefix, ".manifest.json");
    let (manifest, manifest_path) =
        rec.finish("trajectory", None, &Command::Trajectory(a.clone()), &path)?;
    Ok(Report {
        manifest,
        manifest_path,
        notes: vec![format!("{} points", points.len())],
    })
}

fn load_dataset(rec: &mut Recorder, path: &Path) -> CliResult<LabeledDataset> {
    let bytes = rec.read(path)?;
    parse_dataset(&bytes, &path.display().to_string())
}

fn train_cmd(mut a: TrainArgs) -> CliResult<Report> {
    a.data = absolute(&a.data);
    a.out_prefix = resolve_output(&a.out_prefix);
    let mut rec = Recorder::default();
    let ds = load_dataset(&mut rec, &a.data)?;
    let outcome = train(&ds, &a.config())?;

    let records: Vec<EpochRecord> = outcome.logs.iter().map(EpochRecord::from).collect();
    rec.write(&suffixed(&a.out_prefix, "_log.json"), &to_json(&records))?;
    rec.write(
        &suffixed(&a.out_prefix, "_log.csv"),
        &epoch_log_csv(&records),
    )?;
    rec.write(
        &suffixed(&a.out_prefix, "_model.json"),
        &to_json(&outcome.params),
    )?;
    for log in &outcome.logs {
        if let Some(snap) = &log.snapshot {
            let path = suffixed(&a.out_prefix, &format!("_snapshot_e{:04}.csv", log.epoch));
            rec.write(&path, &triplets_csv(snap))?;
        }
    }
    let curve =
        |pick: fn(&EpochRecord) -> f64| records.iter().map(|r| (r.epoch as f64, pick(r))).collect();
    let recall = svg::line_chart(
        "Recall@1",
        "epoch",
        "recall@1",
        &[svg::Series {
            name: "recall@1",
            points: curve(|r| r.recall_at_1),
        }],
    );
    rec.write(&suffixed(&a.out_prefix, "_recall.svg"), recall.as_bytes())?;
    let hard = svg::line_chart(
        "Fraction of hard triplets",
        "epoch",
        "hard fraction",
        &[svg::Series {
            name: "hard fraction",
            points: curve(|r| r.hard_fraction),
        }],
    );
    rec.write(
        &suffixed(&a.out_prefix, "_hard_fraction.svg"),
        hard.as_bytes(),
    )?;

    let last = records.last().expect("at least one epoch");
    let note = format!(
        "final recall@1 {:.4}, collapse {:.4}, hard fraction {:.4}",
        last.recall_at_1, last.collapse, last.hard_fraction
    );
    let path = suffixed(&a.out_prefix, ".manifest.json");
    let (manifest, manifest_path) =
        rec.finish("train", Some(a.seed), &Command::Train(a.clone()), &path)?;
    Ok(Report {
        manifest,
        manifest_path,
        notes: vec![note],
    })
}

/// Unit embeddings of every point, through the model when one is given.
fn embed(
    rec: &mut Recorder,
    ds: &LabeledDataset,
    weights: Option<&Path>,
) -> CliResult<Vec<UnitVector>> {
    match weights {
        Some(path) => {
            let bytes = rec.read(path)?;
            let model: ModelParams = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let model =
                ModelParams::new(model.input_dim, model.embed_dim, model.weights, model.bias)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if model.input_dim != ds.dim() {
                return Err(CliError::Data(format!(
                    "model expects {}-dimensional inputs, dataset has {}",
                    model.input_dim,
                    ds.dim()
                )));
            }
            Ok(ds
                .points
                .iter()
                .map(|x| forward(&model, x))
                .collect::<Result<_, _>>()?)
        }
        None => Ok(ds
            .points
            .iter()
            .map(|x| normalize(x))
            .collect::<Result<_, _>>()?),
    }
}

fn diagram(mut a: DiagramArgs) -> CliResult<Report> {
    a.data = absolute(&a.data);
    a.weights = a.weights.as_deref().map(absolute);
    a.out_prefix = resolve_output(&a.out_prefix);
    let mut rec = Recorder::default();
    let ds = load_dataset(&mut rec, &a.data)?;
    let units = embed(&mut rec, &ds, a.weights.as_deref())?;
    let batch = Batch::new(units, ds.labels.clone())?;
    let points = diagram_extract(&batch);
    let xy: Vec<(f64, f64, bool)> = points
        .iter()
        .map(|p| (p.coord.s_ap, p.coord.s_an, is_hard(p.coord)))
        .collect();
    let hard = xy.iter().filter(|p| p.2).count();
    let title = format!("{} points, {} hard", points.len(), hard);
    rec.write(&suffixed(&a.out_prefix, ".csv"), &diagram_csv(&points))?;
    rec.write(
        &suffixed(&a.out_prefix, ".svg"),
        svg::scatter(&xy, &title).as_bytes(),
    )?;
    let path = suffixed(&a.out_prefix, ".manifest.json");
    let (manifest, manifest_path) =
        rec.finish("diagram", None, &Command::Diagram(a.clone()), &path)?;
    Ok(Report {
        manifest,
        manifest_path,
        notes: vec![title],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_points: usize,
    pub collapse: f64,
    pub recall: Vec<RetrievalResult>,
}

fn eval(mut a: EvalArgs) -> CliResult<Report> {
    a.data = absolute(&a.data);
    a.weights = a.weights.as_deref().map(absolute);
    a.out_prefix = resolve_output(&a.out_prefix);
    if a.k.is_empty() {
        return Err(CliError::Usage("--k needs at least one value".into()));
    }
    let mut rec = Recorder::default();
    let ds = load_dataset(&mut rec, &a.data)?;
    let units = embed(&mut rec, &ds, a.weights.as_deref())?;
    let recall =
        a.k.iter()
            .map(|&k| recall_at_k_slices(&units, &ds.labels, &units, &ds.labels, k, true))
            .collect::<Result<Vec<_>, _>>()?;
    let report = EvalReport {
        num_points: ds.len(),
        collapse: collapse_metric_slices(&units)?,
        recall,
    };
    let note = report
        .recall
        .iter()
        .map(|r| format!("R@{} {:.4}", r.k, r.recall))
        .collect::<Vec<_>>()
        .join(", ");
    rec.write(&suffixed(&a.out_prefix, ".json"), &to_json(&report))?;
    let path = suffixed(&a.out_prefix, ".manifest.json");
    let (manifest, manifest_path) = rec.finish("eval", None, &Command::Eval(a.clone()), &path)?;
    Ok(Report {
        manifest,
        manifest_path,
        notes: vec![note],
    })
}

/// Re-runs the recorded command and checks every recorded checksum.
fn replay(a: ReplayArgs) -> CliResult<Report> {
    let recorded: RunManifest = crate::io::read_json(&a.manifest)?;
    let command: Command = serde_json::from_value(recorded.config.clone())
        .map_err(|e| CliError::Data(format!("{}: bad config: {e}", a.manifest.display())))?;
    if matches!(command, Command::Replay(_)) {
        return Err(CliError::Data(
            "a manifest cannot replay another replay".into(),
        ));
    }
    let report = run(command)?;
    let mut mismatches = Vec::new();
    for (kind, want, got) in [
        ("input", &recorded.inputs, &report.manifest.inputs),
        ("output", &recorded.outputs, &report.manifest.outputs),
    ] {
        if want != got {
            for w in want {
                if !got.contains(w) {
                    mismatches.push(format!("{kind} {} differs", w.path.display()));
                }
            }
            if want.len() != got.len() {
                mismatches.push(format!("{kind} count {} vs {}", want.len(), got.len()));
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(CliError::Data(format!(
            "replay mismatch: {}",
            mismatches.join("; ")
        )));
    }
    let notes = vec![format!(
        "replayed {} outputs, checksums match",
        recorded.outputs.len()
    )];
    Ok(Report { notes, ..report })
}
