//! Command-line front end: `train`, `eval`, `sweep` and `lowres`.
//!
//! Every flag is listed by `--help` together with its default:
//!
//! ```
//! let help = abduct_cli::help_text();
//! for flag in abduct_cli::FLAGS {
//!     assert!(help.contains(flag), "{flag} missing from --help");
//! }
//! assert!(help.contains("[default: 2]"));
//! assert!(help.contains("[default: 0.55]"));
//! assert!(help.contains("[default: 1,2,3]"));
//! assert!(help.contains("[default: 0.45,0.5,0.55]"));
//! assert!(help.contains("[default: 0.01,0.02,0.05,0.10,1.00]"));
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use abduct_core::corpus::{group_by_context, load_records, partition_trainable, ReasoningSample};
use abduct_core::encoder::{load_feature_file, toy_encoder, Encoder, DEFAULT_DIM};
use abduct_core::interaction::Checkpoint;
use abduct_core::loss::LossConfig;
use abduct_core::metrics::{export_scores, write_sweep_report, SweepCell};
use abduct_core::trainer::{self, low_resource_csv, low_resource_run, Optimizer, Seeds, TrainConfig};
use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train_log.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const LOWRES_FILE: &str = "lowres.csv";

/// Every long flag accepted by some subcommand.
pub const FLAGS: [&str; 17] = [
    "--data",
    "--labels",
    "--features",
    "--out",
    "--checkpoint",
    "--gamma",
    "--alpha",
    "--eps",
    "--lr",
    "--epochs",
    "--seed-init",
    "--seed-shuffle",
    "--seed-encoder",
    "--fractions",
    "--gammas",
    "--alphas",
    "--export-scores",
];

#[derive(Debug, Parser)]
#[command(
    name = "abduct",
    version,
    about = "Train and evaluate a hypothesis ranker with a grouped focal loss"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and write a checkpoint plus a step,loss log.
    Train(TrainArgs),
    /// Score a corpus with a checkpoint and print a JSON report.
    Eval(EvalArgs),
    /// Train once per (gamma, alpha) cell and write the accuracy grid.
    Sweep(SweepArgs),
    /// Train on seeded subsamples and write accuracy per fraction.
    Lowres(LowresArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Records file, one JSON object per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Label file, one label (1 or 2) per line.
    #[arg(long)]
    pub labels: PathBuf,
    /// Precomputed feature TSV; replaces the hashing encoder.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Focusing exponent.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub gamma: f64,
    /// Weight on correct hypotheses; wrong ones get 1 - alpha.
    #[arg(long, default_value_t = 0.55, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-8, allow_negative_numbers = true)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// Interaction hidden width; defaults to the feature width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Width of the hashing encoder.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed_init: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_shuffle: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_encoder: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Overrides the encoder seed stored in the checkpoint.
    #[arg(long)]
    pub seed_encoder: Option<u64>,
    /// Write per-hypothesis scores as TSV.
    #[arg(long)]
    pub export_scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", allow_negative_numbers = true)]
    pub gammas: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.45,0.5,0.55",
        allow_negative_numbers = true
    )]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LowresArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Training fractions, each in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.10,1.00", value_parser = parse_fraction)]
    pub fractions: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(format!("{s} is not in (0, 1]"))
    }
}

/// Top-level help followed by the help of each subcommand.
pub fn help_text() -> String {
    let mut cmd = Cli::command();
    let mut out = cmd.render_long_help().to_string();
    for sub in cmd.get_subcommands_mut() {
        out.push_str(&sub.render_long_help().to_string());
    }
    out
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Lowres(args) => cmd_lowres(&args),
    }
}

fn load_samples(data: &DataArgs) -> anyhow::Result<Vec<ReasoningSample>> {
    let records = load_records(&data.data, &data.labels)?;
    let (samples, quarantined) = partition_trainable(group_by_context(&records));
    if !quarantined.is_empty() {
        eprintln!(
            "quarantined {} sample(s) without both a correct and a wrong hypothesis",
            quarantined.len()
        );
    }
    if samples.is_empty() {
        bail!("no trainable samples in {}", data.data.display());
    }
    Ok(samples)
}

fn make_encoder(features: Option<&Path>, seed: u64, dim: usize) -> anyhow::Result<Box<dyn Encoder>> {
    Ok(match features {
        Some(path) => Box::new(load_feature_file(path)?),
        None => Box::new(toy_encoder(seed, dim)?),
    })
}

fn train_config(loss: LossConfig, fit: &FitArgs) -> anyhow::Result<TrainConfig> {
    let config = TrainConfig {
        learning_rate: fit.lr,
        batch_size: fit.batch_size,
        epochs: fit.epochs,
        loss,
        seeds: Seeds {
            init: fit.seed_init,
            shuffle: fit.seed_shuffle,
            encoder: fit.seed_encoder,
        },
        optimizer: match fit.optimizer {
            OptimizerArg::Adam => Optimizer::adam(),
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        hidden_dim: fit.hidden,
    };
    config.validate()?;
    Ok(config)
}

fn create_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let loss = LossConfig::new(args.loss.gamma, args.loss.alpha, args.loss.eps)?;
    let config = train_config(loss, &args.fit)?;
    let samples = load_samples(&args.data)?;
    let encoder = make_encoder(args.data.features.as_deref(), args.fit.seed_encoder, args.fit.dim)?;
    let mut state = trainer::train(&config, &samples, encoder.as_ref())?;
    if args.data.features.is_some() {
        state.provenance.encoder_seed = None;
    }
    create_dir(&args.out)?;
    state.checkpoint().save(args.out.join(CHECKPOINT_FILE))?;
    state.write_log(args.out.join(LOG_FILE))?;
    eprintln!(
        "trained on {} samples for {} steps; wrote {}",
        samples.len(),
        state.step,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let samples = load_samples(&args.data)?;
    let seed = match (args.seed_encoder, checkpoint.provenance.encoder_seed) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) if args.data.features.is_some() => 0,
        (None, None) => bail!("checkpoint was trained on precomputed features; pass --features"),
    };
    let encoder = make_encoder(args.data.features.as_deref(), seed, checkpoint.params.input_dim)?;
    let keep = args.export_scores.is_some();
    let mut report = trainer::evaluate(&checkpoint.params, &samples, encoder.as_ref(), keep)?;
    if let (Some(path), Some(scored)) = (&args.export_scores, report.per_sample_scores.take()) {
        export_scores(&scored, path)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn check_distinct(name: &str, values: &[f64]) -> anyhow::Result<()> {
    for (i, a) in values.iter().enumerate() {
        if values[..i].contains(a) {
            bail!("--{name} lists {a} more than once");
        }
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    check_distinct("gammas", &args.gammas)?;
    check_distinct("alphas", &args.alphas)?;
    let samples = load_samples(&args.data)?;
    let encoder = make_encoder(args.data.features.as_deref(), args.fit.seed_encoder, args.fit.dim)?;
    let mut cells = Vec::new();
    for &gamma in &args.gammas {
        for &alpha in &args.alphas {
            let config = train_config(LossConfig::new(gamma, alpha, args.eps)?, &args.fit)?;
            let state = trainer::train(&config, &samples, encoder.as_ref())?;
            let report = trainer::evaluate(&state.params, &samples, encoder.as_ref(), false)?;
            cells.push(SweepCell {
                gamma,
                alpha,
                acc: report.acc,
            });
        }
    }
    create_dir(&args.out)?;
    write_sweep_report(&cells, args.out.join(SWEEP_FILE))?;
    Ok(())
}

pub fn cmd_lowres(args: &LowresArgs) -> anyhow::Result<()> {
    let loss = LossConfig::new(args.loss.gamma, args.loss.alpha, args.loss.eps)?;
    let config = train_config(loss, &args.fit)?;
    let samples = load_samples(&args.data)?;
    let encoder = make_encoder(args.data.features.as_deref(), args.fit.seed_encoder, args.fit.dim)?;
    let rows = low_resource_run(&config, &samples, encoder.as_ref(), &args.fractions)?;
    create_dir(&args.out)?;
    let path = args.out.join(LOWRES_FILE);
    fs::write(&path, low_resource_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
