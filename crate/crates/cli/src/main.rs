//! `splitwire` command-line front end.
//!
//! Diagnostics go to stderr, data to stdout or `--out`. Exit status is 0 on
//! success, 2 when an I/O error caused the failure and 1 otherwise.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use splitwire::quant::CalibrationPolicy;
use splitwire::report::Format;
use splitwire::tuner::Objective;

#[derive(Debug, Parser)]
#[command(name = "splitwire", version, about = "Cloud-edge partitioning of DNN inference")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Network description: a JSON file or a bundled name
    /// (alexnet, vgg16, googlenet, resnet18).
    #[arg(long, global = true)]
    pub net: Option<String>,
    /// FP32 weights file; synthetic weights from --seed when absent.
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    /// Seed for synthetic weights and inputs [default: $SPLITWIRE_SEED or 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Text,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct Calibration {
    /// `minmax` or `percentile:P` with 0.5 < P <= 1.
    #[arg(long, default_value = "minmax", value_parser = parse_policy)]
    pub calibration: CalibrationPolicy,
    /// Number of synthetic calibration inputs.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
}

#[derive(Debug, Args)]
pub struct Link {
    /// Uplink bandwidth, e.g. `250KB/s`, `1.5MB`, `4000B` (KB = 1000 bytes).
    #[arg(long, default_value = "250KB/s")]
    pub bandwidth: String,
    /// Fixed round-trip overhead added to every upload, in ms.
    #[arg(long, default_value_t = 0.0)]
    pub rtt: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List candidate partition points.
    Candidates {
        /// Also admit points beside brother branches.
        #[arg(long)]
        allow_brother_branches: bool,
        /// Also admit points inside residual shortcut spans.
        #[arg(long)]
        allow_shortcut_spans: bool,
    },
    /// Quantize the weights to INT8 and write them to --out.
    Quantize {
        #[arg(long, default_value = "minmax", value_parser = parse_policy)]
        calibration: CalibrationPolicy,
    },
    /// Measure per-layer edge (INT8) and cloud (FP32) latencies.
    Profile {
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Device label stored in the table.
        #[arg(long, default_value = "local")]
        device: String,
    },
    /// Pick the fastest and the best partition point.
    Tune {
        /// Profile table from `splitwire profile`.
        #[arg(long)]
        profile: PathBuf,
        #[command(flatten)]
        link: Link,
        /// fastest, minupload or privacy:<ms>.
        #[arg(long, default_value = "minupload", value_parser = parse_objective)]
        objective: Objective,
        /// Measure FP32 vs collaborative argmax agreement on N seeded inputs.
        #[arg(long, value_name = "N")]
        accuracy: Option<usize>,
        #[command(flatten)]
        calibration: Calibration,
    },
    /// Run collaborative inference at one partition point.
    Infer {
        /// Last edge layer of a candidate point, or `cloud-only`.
        #[arg(long, default_value = "cloud-only")]
        split: String,
        #[arg(long, value_enum, default_value_t = Mode::Sim)]
        mode: Mode,
        #[command(flatten)]
        link: Link,
        /// Take compute times from this profile instead of measuring them.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Socket mode: serve the cloud half on this address.
        #[arg(long, conflicts_with = "connect")]
        listen: Option<String>,
        /// Socket mode: send the edge half to a cloud at this address.
        #[arg(long)]
        connect: Option<String>,
        /// Number of seeded inputs to run (or connections to serve).
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[command(flatten)]
        calibration: Calibration,
    },
    /// Re-render a JSON tuning result.
    Report {
        /// Result written by `splitwire tune --format json`.
        #[arg(long)]
        result: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sim,
    Socket,
}

fn parse_policy(s: &str) -> Result<CalibrationPolicy, String> {
    s.parse()
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: splitwire::tuner::TuneError| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some()) {
        2
    } else {
        1
    }
}

/// The error chain, skipping causes whose text a wrapper already quoted.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

/// After a usage error, show the help of the subcommand that was invoked.
fn print_subcommand_help() {
    let mut cmd = Cli::command();
    let name = std::env::args().skip(1).find(|a| cmd.find_subcommand(a).is_some());
    if let Some(sub) = name.and_then(|n| cmd.find_subcommand_mut(&n)) {
        let mut sub = sub.clone().bin_name(format!("splitwire {}", sub.get_name()));
        eprintln!("\n{}", sub.render_help());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            print_subcommand_help();
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
