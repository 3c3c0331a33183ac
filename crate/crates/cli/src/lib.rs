//! `interrupt-engine` command line. Every command reads its inputs from the
//! given paths, writes only below `--out`, and is deterministic for a given
//! `--config` and `--seed`.

mod commands;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use interrupt_engine::ldcrf::LdcrfHyperparams;
use interrupt_engine::policy::PolicyKind;

pub use error::{CliError, ErrorKind};

/// Log level filter variable, in `env_logger` syntax.
pub const LOG_ENV: &str = "INTERRUPT_ENGINE_LOG";

#[derive(Debug, Parser)]
#[command(name = "interrupt-engine", version, about = "Interruptibility classification and interruption study workflows")]
pub struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scripted trials: detection logs and 2 Hz ground-truth labels.
    Generate(GenerateArgs),
    /// Fuse detection logs into 2 Hz feature-frame CSVs.
    Fuse(FuseArgs),
    /// Train an LDCRF model on frame and label files.
    Train(TrainArgs),
    /// Label frame files with a trained model.
    Predict(PredictArgs),
    /// Trial-grouped k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Simulate study trials under one or more policies.
    Simulate(SimulateArgs),
    /// Summaries and omnibus tests over simulated trial logs.
    Report(ReportArgs),
    /// Run the wizard-of-oz and annotation service.
    Serve(ServeArgs),
    /// Turn an annotation session's decision log into label files.
    ExportAnnotations(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of scripted trials.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Script length in seconds; overrides `training.script.duration_s`.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Detection logs (`*.detections.jsonl`) or directories holding them.
    #[arg(required = true, value_name = "PATH")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Hidden states per label.
    #[arg(long, default_value_t = LdcrfHyperparams::default().hidden_per_label)]
    pub hidden_per_label: usize,
    /// Causal observation window in ticks.
    #[arg(long, default_value_t = LdcrfHyperparams::default().window)]
    pub window: usize,
    /// Variance of the Gaussian weight prior.
    #[arg(long, default_value_t = LdcrfHyperparams::default().l2_sigma2)]
    pub l2_sigma2: f64,
    #[arg(long, default_value_t = LdcrfHyperparams::default().max_iterations)]
    pub max_iterations: usize,
}

impl ModelArgs {
    pub fn hyperparams(&self) -> LdcrfHyperparams {
        LdcrfHyperparams {
            hidden_per_label: self.hidden_per_label,
            window: self.window,
            l2_sigma2: self.l2_sigma2,
            max_iterations: self.max_iterations,
            ..LdcrfHyperparams::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory of `<trial>.frames.csv` files.
    #[arg(long, value_name = "DIR")]
    pub frames: PathBuf,
    /// Directory of `<trial>.labels.csv` files; defaults to `--frames`.
    #[arg(long, value_name = "DIR")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Frame CSVs to label.
    #[arg(required = true, value_name = "FILE")]
    pub inputs: Vec<PathBuf>,
    /// Label each frame from a causal buffer instead of the whole sequence.
    #[arg(long)]
    pub online: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Conditions to run, comma separated.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_condition)]
    pub condition: Vec<PolicyKind>,
    /// Trials per condition.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// MDL classifier; trained from the config's `training` section when
    /// omitted.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of `*.trial_log.json` files.
    #[arg(long, value_name = "DIR")]
    pub logs: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides `serve.bind`.
    #[arg(long)]
    pub bind: Option<String>,
    /// Overrides `serve.time_scale`.
    #[arg(long)]
    pub time_scale: Option<f64>,
    /// Detection logs offered for annotation; the trial id is the file
    /// name without `.detections.jsonl`.
    #[arg(long, value_name = "FILE")]
    pub replay: Vec<PathBuf>,
    /// Session artifacts are written here; nothing is written without it.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Session decision log (`<session>.decisions.json`).
    #[arg(long, value_name = "FILE")]
    pub decisions: PathBuf,
    /// The replayed detection log; fixes the tick grid.
    #[arg(long, value_name = "FILE")]
    pub replay: PathBuf,
    /// Annotators to export; all labelling annotators when omitted.
    #[arg(long)]
    pub annotator: Vec<String>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn parse_condition(s: &str) -> Result<PolicyKind, String> {
    s.to_ascii_lowercase().parse().map_err(|_| format!("unknown condition `{s}` (expected rnd, mdl or woz)"))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as Clap;
            if matches!(e.kind(), Clap::DisplayHelp | Clap::DisplayVersion | Clap::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == Clap::DisplayHelpOnMissingArgumentOrSubcommand { ErrorKind::Usage.exit_code() } else { 0 };
            }
            let kind = if e.kind() == Clap::UnknownArgument { ErrorKind::UnknownFlag } else { ErrorKind::Usage };
            let _ = e.print();
            let err = CliError::new(kind, e.kind().to_string());
            eprintln!("{}", err.line());
            return kind.exit_code();
        }
    };
    match commands::execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}
