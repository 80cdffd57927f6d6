//! `spikechip`: train, compress, compile, simulate, and report on spiking
//! networks targeted at a behavioral SFQ chip.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spikechip_core::chipsim::ClockTopology;
use spikechip_core::data::Split;
use spikechip_core::error::Error;
use spikechip_core::eval::DecodeRule;

use config::{CliOverrides, RunConfig};

#[derive(Parser)]
#[command(name = "spikechip", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Pipeline profile.
    #[arg(long, value_parser = ["complete", "chip"])]
    profile: Option<String>,
    /// Digit subset, e.g. `--digits 2,3,4`.
    #[arg(long, value_delimiter = ',')]
    digits: Option<Vec<u8>>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Run output directory.
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
    /// Directory holding the four MNIST IDX files.
    #[arg(long = "data-dir")]
    data_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let overrides = CliOverrides {
            profile: self.profile.clone(),
            digits: self.digits.clone(),
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            data_dir: self.data_dir.clone(),
        };
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeArg {
    SpikeCount,
    SingleSpike,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Serial,
    HTree,
}

#[derive(Subcommand)]
enum Command {
    /// Run the staged training pipeline and write checkpoints + metrics.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Override the checkpoint's decoding rule.
        #[arg(long, value_enum)]
        decode: Option<DecodeArg>,
    },
    /// Resume the pipeline's compression stages from a checkpoint.
    Compress {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated stage names to run (default: all).
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
    },
    /// Compile a ternary checkpoint onto the behavioral netlist.
    Compile {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output netlist path (default `<out>/netlist.json`).
        #[arg(long)]
        netlist: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "serial")]
        clock: ClockArg,
    },
    /// Simulate a netlist over the test subset; with a checkpoint, verify
    /// hardware/software equivalence.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write a per-cycle event log for the first sample.
        #[arg(long)]
        trace: bool,
    },
    /// Render the tables for a finished run directory.
    Report {
        /// Run directory holding `metrics.json`.
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Topology(_) => 2,
        Error::Data(_) => 3,
        Error::Training(_) | Error::Numeric(_) => 4,
        Error::Compile(_) => 5,
        Error::Equivalence(_) => 6,
        Error::Serialize(_) | Error::Io(_) => 1,
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common } => commands::cmd_train(&common.resolve()?),
        Command::Eval {
            common,
            checkpoint,
            split,
            decode,
        } => {
            let cfg = common.resolve()?;
            commands::cmd_eval(
                &checkpoint,
                &cfg.data_dir,
                match split {
                    SplitArg::Train => Split::Train,
                    SplitArg::Test => Split::Test,
                },
                decode.map(|d| match d {
                    DecodeArg::SpikeCount => DecodeRule::SpikeCount,
                    DecodeArg::SingleSpike => DecodeRule::SingleSpike,
                }),
            )
        }
        Command::Compress {
            common,
            checkpoint,
            stages,
        } => commands::cmd_compress(&common.resolve()?, &checkpoint, stages),
        Command::Compile {
            common,
            checkpoint,
            netlist,
            clock,
        } => {
            let cfg = common.resolve()?;
            let out = commands::in_out_dir(&cfg, "netlist.json", netlist);
            commands::cmd_compile(
                &cfg,
                &checkpoint,
                &out,
                match clock {
                    ClockArg::Serial => ClockTopology::Serial,
                    ClockArg::HTree => ClockTopology::HTree,
                },
            )
        }
        Command::Simulate {
            common,
            netlist,
            checkpoint,
            trace,
        } => {
            let cfg = common.resolve()?;
            let trace_out = trace.then(|| cfg.out_dir.join("trace.log"));
            commands::cmd_simulate(&cfg, &netlist, checkpoint.as_deref(), trace_out.as_deref())
        }
        Command::Report { run_dir } => commands::cmd_report(&run_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
