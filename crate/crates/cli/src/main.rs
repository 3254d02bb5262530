//! `arsentry`: evaluation, dataset synthesis, the edge service and a
//! simulated AR client.

mod backends;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use arsentry_core::eval::{NoVerdictPolicy, ReportFormat, TaskKind};
use arsentry_core::ObstructionMethod;
use clap::{Args, Parser, Subcommand};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;
pub const EXIT_INVALID: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "arsentry", version, about = "Detect obstructing and manipulating AR content")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a detector against a labelled dataset.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write a synthetic dataset with known masks and labels.
    Synth(SynthArgs),
    /// Drive a running edge service.
    #[command(subcommand)]
    Client(ClientCommand),
    /// Run the edge service.
    Serve(ServeArgs),
    /// Serve the model wire protocol without real models.
    #[command(subcommand)]
    Backend(BackendCommand),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Obstruction detection.
    Obstruct(ObstructArgs),
    /// Information-manipulation detection.
    Manip(ManipArgs),
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// Model server base URL: one for every role, or three for vlm, detector
    /// and segmenter in that order.
    #[arg(long, num_args = 1..=3, value_name = "URL", conflicts_with_all = ["replay", "gt_backends"])]
    backends: Vec<String>,
    /// Fixture directory. Records every exchange unless --replay is given.
    #[arg(long, value_name = "DIR")]
    fixtures: Option<PathBuf>,
    /// Answer from the fixture directory only; a missing fixture fails the run.
    #[arg(long, requires = "fixtures")]
    replay: bool,
    /// Answer from the dataset's own labels and masks.
    #[arg(long, conflicts_with = "replay")]
    gt_backends: bool,
    #[arg(long, default_value_t = 60_000, value_name = "MS")]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Bearer token sent to the model servers.
    #[arg(long, env = "ARSENTRY_BACKEND_TOKEN", hide_env_values = true)]
    token: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Also write the JSON report here.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// How samples without an extractable verdict are counted.
    #[arg(long, default_value = "incorrect")]
    no_verdict: NoVerdictPolicy,
}

#[derive(Debug, Args)]
struct ObstructArgs {
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// viddar, endtoend, underdetailed, greedy, prior, saliency or canny.
    #[arg(long, default_value = "viddar")]
    method: ObstructionMethod,
    /// Overlap threshold; defaults to the dataset's, else 0.25.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    box_confidence_min: Option<f64>,
    /// Per-channel difference below which pixels count as unchanged.
    #[arg(long)]
    diff_tolerance: Option<u8>,
    /// Changed regions smaller than this are dropped.
    #[arg(long)]
    min_component_area: Option<u32>,
    /// JSON object mapping a label to accepted alternative phrases.
    #[arg(long, value_name = "FILE")]
    synonyms: Option<PathBuf>,
    #[command(flatten)]
    backends: BackendArgs,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct ManipArgs {
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Model name shown in the report.
    #[arg(long)]
    model: Option<String>,
    #[command(flatten)]
    backends: BackendArgs,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "obstruction")]
    kind: TaskKind,
    /// Threshold used to label obstruction scenes.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum ClientCommand {
    /// Stream an obstruction dataset through the service and report latency.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_name = "URL")]
    service: String,
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Frames in flight per session.
    #[arg(long, default_value_t = 1)]
    pipeline: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 120_000, value_name = "MS")]
    timeout_ms: u64,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// TOML service config.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,
    /// Replay model answers from this fixture directory instead of the
    /// configured backends.
    #[arg(long, value_name = "DIR", conflicts_with = "dataset")]
    fixtures: Option<PathBuf>,
    /// Answer model calls from this dataset's labels and masks.
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum BackendCommand {
    /// Serve recorded fixtures.
    Replay(BackendServeArgs),
    /// Serve answers derived from a dataset's labels and masks.
    Oracle(BackendServeArgs),
}

#[derive(Debug, Args)]
struct BackendServeArgs {
    /// Fixture directory for `replay`, dataset directory for `oracle`.
    #[arg(value_name = "DIR")]
    source: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8650", value_name = "ADDR")]
    listen: String,
    /// Require this bearer token.
    #[arg(long, env = "ARSENTRY_BACKEND_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Sleep before every answer.
    #[arg(long, value_name = "MS")]
    delay_ms: Option<u64>,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, dataset or config.
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

pub fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

pub fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

async fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Eval(EvalCommand::Obstruct(a)) => commands::eval_obstruct(a).await,
        Command::Eval(EvalCommand::Manip(a)) => commands::eval_manip(a).await,
        Command::Synth(a) => commands::synth(a),
        Command::Client(ClientCommand::Simulate(a)) => commands::simulate(a).await,
        Command::Serve(a) => commands::serve(a).await,
        Command::Backend(BackendCommand::Replay(a)) => commands::backend(a, false).await,
        Command::Backend(BackendCommand::Oracle(a)) => commands::backend(a, true).await,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { 0 });
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match rt.block_on(run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            match &f {
                Failure::Invalid(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn backend_flag_takes_one_or_three() {
        let ok = Cli::try_parse_from(["arsentry", "eval", "obstruct", "--dataset", "d", "--backends", "http://a", "http://b", "http://c"]);
        assert!(ok.is_ok());
        let replay_and_live = Cli::try_parse_from([
            "arsentry", "eval", "obstruct", "--dataset", "d", "--backends", "http://a", "--fixtures", "f", "--replay",
        ]);
        assert!(replay_and_live.is_err());
        let replay_alone = Cli::try_parse_from(["arsentry", "eval", "manip", "--dataset", "d", "--replay"]);
        assert!(replay_alone.is_err());
    }
}
