//! `earshot`: batch entry points for corpus generation, pre-training,
//! episodic evaluation, location training, prediction and serving.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use earshot_core::eval::Method;
use earshot_core::nn::TrainScope;

use crate::config::Suite;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "earshot", version, about = "Few-shot sound recognition with soundscape-augmented prototypes")]
#[command(after_help = "Settings are layered: defaults, then --config, then flags. Every run writes the \
resolved settings next to its outputs (a directory gets earshot-run.toml, a file gets <file>.run.toml).\n\
Errors are printed as one line: error: kind=<kind> message=\"...\". Usage errors exit 2, data errors exit 1.")]
pub struct Cli {
    /// Base directory for every relative path.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// TOML settings file (sections: synth, pretrain, episodes, eval, location, finetune, serve).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log filter for stderr, e.g. `info` or `earshot_service=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus (WAVs plus manifest.tsv).
    SynthData(SynthArgs),
    /// Pre-train the embedder on a corpus with a softmax head.
    Pretrain(PretrainArgs),
    /// Run N-way K-shot episodes and compare methods.
    #[command(after_help = commands::REPORT_HELP)]
    EvalEpisodes(EvalArgs),
    /// Build a location model from recordings and an ambient clip.
    TrainLocation(TrainArgs),
    /// Classify one recording with a location model.
    Predict(PredictArgs),
    /// Run the HTTP + WebSocket recognition service.
    Serve(ServeArgs),
    /// Write per-second embeddings of a corpus with their labels.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    suite: Option<Suite>,
    #[arg(long)]
    classes: Option<usize>,
    /// Clips per class in each context.
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "embedder.psnd")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Seeds weight init and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Output channels of each conv block, e.g. `16,32,64,64`.
    #[arg(long, value_delimiter = ',')]
    conv_channels: Option<Vec<usize>>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Scale embeddings to unit length.
    #[arg(long)]
    normalize_embeddings: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EpisodeArgs {
    #[arg(long)]
    n_way: Option<usize>,
    #[arg(long)]
    k_shot: Option<usize>,
    /// Query clips per class.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    /// Seeds episode sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw support clips only from this context.
    #[arg(long)]
    support_context: Option<String>,
}

#[derive(Debug, Args)]
pub struct LocationArgs {
    /// Soundscape mixing coefficient in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Open-set ratio threshold T in (0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Seconds quieter than this (dBFS) are reported as quiet.
    #[arg(long, allow_hyphen_values = true)]
    loudness_gate: Option<f64>,
    /// Seeds soundscape crops.
    #[arg(long)]
    location_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "embedder.psnd")]
    embedder: PathBuf,
    /// Output directory for report.json and report.txt.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Comma-separated: augmented (protosound), vanilla (vanilla_protonet), finetune.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Hold out this many classes as open-set queries and sweep T.
    #[arg(long)]
    held_out: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    finetune_lr: Option<f64>,
    #[arg(long, value_parser = parse_scope)]
    finetune_scope: Option<TrainScope>,
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[command(flatten)]
    location: LocationArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "embedder.psnd")]
    embedder: PathBuf,
    /// Directory of `<class>/*.wav` recordings; the first second of each file is used.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Ambient recording of the location (at least 2 s).
    #[arg(long)]
    ambient: PathBuf,
    /// Ambient of the place the recordings were made, if not the location.
    #[arg(long)]
    source_ambient: Option<PathBuf>,
    /// Library directory of `<class>/*.wav`.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Library class to include (repeatable).
    #[arg(long = "library-class")]
    library_classes: Vec<String>,
    #[arg(long, default_value = "location")]
    name: String,
    #[arg(long, default_value = "location.psnd")]
    out: PathBuf,
    #[command(flatten)]
    location: LocationArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, default_value = "embedder.psnd")]
    embedder: PathBuf,
    /// Location model.
    #[arg(long)]
    model: PathBuf,
    /// WAV recording to classify.
    #[arg(long = "in")]
    input: PathBuf,
    /// Always answer one of the classes (no open-set or loudness gate).
    #[arg(long)]
    closed_set: bool,
    /// Print the full decision as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "embedder.psnd")]
    embedder: PathBuf,
    /// State directory for locations.
    #[arg(long, default_value = "service")]
    root: PathBuf,
    /// Library directory of `<class>/*.wav`.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Listen address; port 0 picks a free port.
    #[arg(long)]
    addr: Option<String>,
    #[command(flatten)]
    location: LocationArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "embedder.psnd")]
    embedder: PathBuf,
    #[arg(long, default_value = "embeddings.tsv")]
    out: PathBuf,
    /// Only clips from this context.
    #[arg(long)]
    context: Option<String>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: earshot_core::eval::EvalError| e.to_string())
}

fn parse_scope(s: &str) -> Result<TrainScope, String> {
    match s {
        "full" => Ok(TrainScope::Full),
        "head-only" | "head" => Ok(TrainScope::HeadOnly),
        other => Err(format!("unknown scope {other:?} (full, head-only)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(first).line());
            return ExitCode::from(2);
        }
    };
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "warn".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
