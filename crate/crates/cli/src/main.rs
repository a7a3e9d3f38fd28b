//! `acsr`: command-line driver for the cued speech recognition pipeline.
//! Stages exchange data only through files, so any stage can be rerun alone.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "acsr", version, about = "Cued speech recognition pipeline")]
struct Cli {
    /// Pipeline config (TOML). Flags override it; it overrides built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for synthesis, the mock recognizer and parameter initialisation.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for training. Results do not depend on it.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select hand keyframes from a trajectory CSV.
    Filter(FilterArgs),
    /// Build the chat-completions request for one video's keyframes.
    Prompt(PromptArgs),
    /// Label keyframes with hand positions and shapes.
    Recognize(RecognizeArgs),
    /// Train the fusion head on the train split of a synthetic corpus.
    Train(TrainArgs),
    /// Transcribe a split of a corpus with a trained model.
    Decode(DecodeArgs),
    /// Compute CER and WER of hypotheses against references.
    Eval(EvalArgs),
    /// Write a phoneme confusion matrix as CSV and PGM.
    Confusion(ConfusionArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Trajectory CSV with header `frame,x,y`.
    #[arg(long, value_name = "PATH")]
    traj: PathBuf,
    /// Movement threshold in pixels (>= 0).
    #[arg(long, allow_negative_numbers = true, value_parser = non_negative_f64)]
    sigma: Option<f64>,
    /// Maximum frame gap inside a group (>= 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    theta: Option<u64>,
    /// Output JSON file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImageArgs {
    /// Keyframe JSON from `filter`.
    #[arg(long, value_name = "PATH")]
    keyframes: PathBuf,
    /// Keyframe image path with `{frame}` replaced by the frame index.
    #[arg(long, value_name = "PATTERN")]
    frame_pattern: Option<String>,
    /// Support-set manifest listing one image per (position, shape).
    #[arg(long, value_name = "PATH")]
    support: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PromptArgs {
    #[command(flatten)]
    images: ImageArgs,
    /// Output JSON file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RecognizeMode {
    /// Corrupt ground-truth labels at the configured accuracies.
    Mock,
    /// Query an OpenAI-compatible endpoint.
    Remote,
}

#[derive(Debug, Args)]
struct RecognizeArgs {
    #[command(flatten)]
    images: ImageArgs,
    #[arg(long, value_enum, default_value_t = RecognizeMode::Mock)]
    mode: RecognizeMode,
    /// Truth file (synth `*.truth.json` or a recognition JSON); mock mode only.
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
    /// Mock position accuracy in [0, 1].
    #[arg(long, value_parser = probability)]
    position_accuracy: Option<f64>,
    /// Mock shape accuracy in [0, 1].
    #[arg(long, value_parser = probability)]
    shape_accuracy: Option<f64>,
    /// Output JSON file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HandArg {
    /// Mock recognizer labels on detected keyframes.
    Mock,
    /// True labels on detected keyframes.
    Truth,
    /// No hand stream (lip-only).
    None,
}

#[derive(Debug, Args)]
struct HandOptions {
    /// Source of the hand stream.
    #[arg(long, value_enum, default_value_t = HandArg::Mock)]
    hand: HandArg,
    /// Mock position accuracy in [0, 1].
    #[arg(long, value_parser = probability)]
    position_accuracy: Option<f64>,
    /// Mock shape accuracy in [0, 1].
    #[arg(long, value_parser = probability)]
    shape_accuracy: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus manifest written by `synth`.
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[command(flatten)]
    hand: HandOptions,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = non_negative_f64)]
    lr: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: Option<u64>,
    /// Output model file (MFMP).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Eval,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Model file (MFMP) written by `train`.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Corpus manifest written by `synth`.
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Eval)]
    split: SplitArg,
    #[command(flatten)]
    hand: HandOptions,
    /// Output transcript file, one line per utterance.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Reference transcripts, one utterance per line.
    #[arg(long, value_name = "PATH")]
    refs: PathBuf,
    /// Hypothesis transcripts, line-aligned with the references.
    #[arg(long, value_name = "PATH")]
    hyps: PathBuf,
    /// Output metrics JSON; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfusionArgs {
    #[arg(long, value_name = "PATH")]
    refs: PathBuf,
    #[arg(long, value_name = "PATH")]
    hyps: PathBuf,
    /// Output base path; `.csv` and `.pgm` are appended.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of utterances.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Size of the eval split (the last utterances); default n / 5.
    #[arg(long)]
    eval_count: Option<usize>,
    /// Standard deviation of the lip feature noise.
    #[arg(long, value_parser = non_negative_f64)]
    noise: Option<f64>,
    /// Lip feature dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    lip_dim: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("`{s}`: {e}"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v < 0.0 {
        return Err(format!("must be >= 0, got {v}"));
    }
    Ok(v)
}

fn probability(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("must be in [0, 1], got {v}"));
    }
    Ok(v)
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Filter(_) => "filter",
            Command::Prompt(_) => "prompt",
            Command::Recognize(_) => "recognize",
            Command::Train(_) => "train",
            Command::Decode(_) => "decode",
            Command::Eval(_) => "eval",
            Command::Confusion(_) => "confusion",
            Command::Synth(_) => "synth",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_globals(cli.seed, cli.jobs.map(|j| j as usize));
    match cli.command {
        Command::Filter(a) => commands::filter(&cfg, a),
        Command::Prompt(a) => commands::prompt(&cfg, a),
        Command::Recognize(a) => commands::recognize(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Decode(a) => commands::decode(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Confusion(a) => commands::confusion(&cfg, a),
        Command::Synth(a) => commands::synth(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {stage}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
