use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urgentkit::codec_cmd::{cmd_codec_roundtrip, cmd_codec_train, TrainArgs};
use urgentkit::config::RunConfig;
use urgentkit::enhance::cmd_enhance;
use urgentkit::evaluate::{cmd_evaluate, parse_metrics};
use urgentkit::report::cmd_report;
use urgentkit::simulate::cmd_simulate;
use urgentkit::{CliError, Outcome};

const LOG_ENV: &str = "URGENTKIT_LOG";
const LOG_LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

/// Simulate, enhance and evaluate speech from JSONL manifests
#[derive(Parser, Debug)]
#[command(name = "urgentkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct Jobs {
    /// Worker threads (defaults to the number of CPUs)
    #[arg(long)]
    jobs: Option<usize>,
}

impl Jobs {
    fn get(self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write degraded/target pairs and a completed manifest
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration (only the `simulate` section is used)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Run the three-stage pipeline on every manifest entry
    Enhance {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Score degraded and enhanced outputs against the targets
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory written by `enhance`
        #[arg(long)]
        enhanced: PathBuf,
        /// Report path (JSONL); the table goes next to it as .txt
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated metric names
        #[arg(long, default_value = "si_sdr,sdr,lsd,mcd,mel_distance")]
        metrics: String,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Print a JSONL report as an aligned table
    Report {
        /// JSONL report written by `evaluate`
        input: PathBuf,
        /// Also write the table here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train codebooks or measure round-trip fidelity
    #[command(subcommand)]
    Codec(CodecCommand),
}

#[derive(Subcommand, Debug)]
enum CodecCommand {
    /// Train residual codebooks on the clean files of a manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Codebook file to write
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Training frames kept after subsampling
        #[arg(long, default_value_t = 20_000)]
        max_frames: usize,
    },
    /// Encode and decode every clean file; report mel distance per level
    Roundtrip {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
}

fn init_logging() {
    let level = match std::env::var(LOG_ENV) {
        Ok(v) if LOG_LEVELS.contains(&v.as_str()) => v,
        Ok(v) => {
            eprintln!("{LOG_ENV}={v:?} is not one of {}; using warn", LOG_LEVELS.join(", "));
            "warn".into()
        }
        Err(_) => "warn".into(),
    };
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Simulate {
            manifest,
            out,
            config,
            seed,
            jobs,
        } => {
            let cfg = load_config(config.as_deref())?;
            let s = cmd_simulate(&manifest, &out, seed, jobs.get(), &cfg.simulate)?;
            println!("{} entries, {} failed", s.entries.len(), s.failed);
            Ok(s.outcome())
        }
        Command::Enhance {
            manifest,
            config,
            out,
            seed,
            jobs,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let r = cmd_enhance(&manifest, &cfg, &out, jobs.get())?;
            println!("{} utterances, {} failed, config {}", r.utterances.len(), r.failed(), r.config_hash);
            Ok(r.outcome())
        }
        Command::Evaluate {
            manifest,
            enhanced,
            out,
            metrics,
            jobs,
        } => {
            let metrics = parse_metrics(&metrics)?;
            let r = cmd_evaluate(&manifest, &enhanced, &metrics, jobs.get())?;
            r.write(&out)?;
            print!("{}", r.to_table());
            Ok(Outcome::Success)
        }
        Command::Report { input, out } => {
            print!("{}", cmd_report(&input, out.as_deref())?);
            Ok(Outcome::Success)
        }
        Command::Codec(CodecCommand::Train {
            manifest,
            out,
            seed,
            levels,
            size,
            max_frames,
        }) => {
            let args = TrainArgs {
                levels,
                size,
                seed,
                max_frames,
                ..TrainArgs::default()
            };
            let (_, hash) = cmd_codec_train(&manifest, &out, &args)?;
            println!("{hash}");
            Ok(Outcome::Success)
        }
        Command::Codec(CodecCommand::Roundtrip {
            codebook,
            manifest,
            out,
            jobs,
        }) => {
            let r = cmd_codec_roundtrip(&codebook, &manifest, &out, jobs.get())?;
            print!("{}", r.to_table());
            Ok(r.outcome())
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
