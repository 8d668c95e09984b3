//! `fcre`: run membership-inference audits from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error,
//! 3 predictor or protocol error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcre::Error;

#[derive(Debug, Parser)]
#[command(name = "fcre", version, about = "Frequency-calibrated membership-inference audits for diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every image in a manifest and report attack metrics.
    Audit(AuditArgs),
    /// Evaluate the attack over a grid of mask thresholds.
    Ablate(AblateArgs),
    /// Re-emit histogram and ROC plots from a saved report.
    Plot(PlotArgs),
    /// Handshake with an external noise predictor and check its replies.
    VerifyProtocol(VerifyArgs),
    /// Write a synthetic member/non-member benchmark to disk.
    Synth(SynthArgs),
    /// Print the resolved configuration.
    Config(ConfigArgs),
}

/// Configuration sources, applied in order: file, `--set`, explicit flags.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Configuration file (flat `key = value` TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set t_attack=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Attack to run: fcre, secmi or loss.
    #[arg(long)]
    attack: Option<String>,
    /// Predictor: constant, gaussian, memorizing or external.
    #[arg(long)]
    predictor: Option<String>,
    /// Endpoint (host:port) of an external predictor.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    t_attack: Option<usize>,
    #[arg(long)]
    sampling_steps: Option<usize>,
    #[arg(long)]
    l_min: Option<f64>,
    #[arg(long)]
    l_max: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Manifest of `path,label` lines.
    #[arg(long, short)]
    manifest: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Skip the histogram and ROC plots.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long, short)]
    manifest: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Threshold cells as `lo:hi` pairs, e.g. `0:100,15:85`. Defaults to the
    /// four-cell grid (0,100), (15,85), (15,100), (0,85).
    #[arg(long, value_delimiter = ',')]
    grid: Vec<String>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// A `report.json` written by `audit`.
    #[arg(long, short)]
    report: PathBuf,
    /// Directory for the plot files; defaults to the report's directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Endpoint (host:port) of the predictor service.
    #[arg(long)]
    endpoint: String,
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
    /// Image shape to probe with, as HEIGHTxWIDTHxCHANNELS.
    #[arg(long, default_value = "32x32x1")]
    shape: String,
    /// Diffusion step sent with the probes.
    #[arg(long, default_value_t = 100)]
    t: usize,
    /// Schedule length the service is expected to accept.
    #[arg(long, default_value_t = 1000)]
    total_steps: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value_t = 256)]
    members: usize,
    #[arg(long, default_value_t = 256)]
    nonmembers: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Half-width of the uniform per-pixel noise added to audited images.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Maps an error to the documented process exit code.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidSchedule(_) | Error::InvalidTrajectory(_) => 1,
        Error::Predictor(_) | Error::Protocol(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Audit(a) => commands::audit(&a.manifest, &a.config, a.no_plots),
        Command::Ablate(a) => commands::ablate(&a.manifest, &a.config, &a.grid),
        Command::Plot(a) => commands::plot(&a.report, a.output.as_deref()),
        Command::VerifyProtocol(a) => commands::verify_protocol(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Config(a) => commands::print_config(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
