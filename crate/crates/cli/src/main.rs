mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpp_core::detector::ThresholdMode;

/// Multidimensional pulse position modulation simulator.
#[derive(Debug, Parser)]
#[command(name = "mpp", version)]
struct Cli {
    /// Master seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration. Unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone, Copy)]
struct CodecArgs {
    /// Message bits k.
    #[arg(long)]
    message_bits: Option<usize>,
    /// Zero checksum bits c appended before encoding.
    #[arg(long)]
    checksum_bits: Option<usize>,
    /// Slots per packet n.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    hash_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the packet (hex, slot 0 first) for one message.
    Encode {
        /// Message text; `\n`, `\t`, `\\` and `\xNN` escapes are expanded.
        #[arg(long, conflicts_with = "hex")]
        ascii: Option<String>,
        /// Message as hex digits, most significant bit first.
        #[arg(long)]
        hex: Option<String>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// List messages contained in a packet, in ascending order.
    Decode {
        /// Packet hex; read from standard input when omitted.
        packet: Option<String>,
        /// Print only the first (smallest) message.
        #[arg(long, conflicts_with = "all")]
        first: bool,
        /// Print every message up to --limit (the default).
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = mpp_core::codec::DEFAULT_DECODE_LIMIT)]
        limit: usize,
        /// Decode the OR of these packets (files holding hex, or hex itself).
        #[arg(long, num_args = 2.., conflicts_with = "packet")]
        union: Vec<String>,
        /// Print messages as escaped ASCII rather than hex.
        #[arg(long)]
        ascii: bool,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Packet-error-rate curve over the configured Eb/Nb grid.
    PerCurve {
        /// Messages per grid point; overrides the config.
        #[arg(long)]
        repetitions: Option<usize>,
        /// Comma-separated Eb/Nb grid in dB; overrides the config.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        grid: Option<Vec<f64>>,
        /// Threshold modes to run; overrides the config.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<ThresholdMode>>,
        /// CSV of `eb_nb_db,per,label` points to list beside the results.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Run the stepped threshold sweep at one Eb/Nb.
    Calibrate {
        #[arg(long, default_value_t = 16.0, allow_negative_numbers = true)]
        snr: f64,
        #[arg(long, default_value_t = ThresholdMode::Dual)]
        mode: ThresholdMode,
    },
    /// Fit Middleton Class A parameters to voltage samples.
    FitNoise {
        /// CSV with `time_s,volts` rows or a single volts column.
        samples: PathBuf,
        #[arg(long, default_value_t = 3)]
        terms: usize,
    },
    /// Write a noise waveform as `time_s,volts` CSV.
    GenNoise {
        /// Harmonics of the line frequency.
        #[arg(long)]
        harmonics: bool,
        /// Line-locked impulse train.
        #[arg(long)]
        line_locked: bool,
        /// Burst-gated asynchronous impulse train.
        #[arg(long)]
        burst: bool,
        /// Middleton Class A background with impulsive index A and ratio Gamma.
        #[arg(long, num_args = 2, value_names = ["A", "GAMMA"])]
        middleton: Option<Vec<f64>>,
        /// Total rms of the Middleton component, volts.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// White Gaussian noise rms, volts.
        #[arg(long)]
        awgn: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        duration: f64,
        #[arg(long, default_value_t = 4.1e6)]
        rate: f64,
        /// Absolute start time, seconds.
        #[arg(long, default_value_t = 0.0)]
        origin: f64,
        #[arg(long, default_value = "noise.csv")]
        file: String,
    },
    /// Monte Carlo count of messages decoded from random packets.
    Hallucinate {
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3333333333333333,0.5,1")]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Codec defaults here are k=10, c=5, n=256.
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Mean decoder node expansions as packet density grows.
    CostProfile {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.33,0.5,0.7,0.9")]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Codec defaults here are k=20, c=10, n=256.
        #[command(flatten)]
        codec: CodecArgs,
    },
}

/// How a command failed: bad usage or configuration exits 1, anything that
/// goes wrong while running exits 2.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
