//! `semparse` — train and evaluate semantic parsers on generated
//! multi-domain corpora. Progress goes to stderr; machine-readable
//! output goes to files (or stdout for the inspection commands).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, EvalFlags, GenFlags, RunFlags};

#[derive(Parser)]
#[command(name = "semparse", version, about = "Weakly supervised semantic parsing toolkit")]
struct Cli {
    /// Worker threads for parallel cells (default: all processors)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// JSON config file; keys may be nested or flat dotted paths
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Corpus directory (from gen-data)
    #[arg(long)]
    corpus: Option<PathBuf>,

    /// Output directory for checkpoints, results, and the config snapshot
    #[arg(long)]
    out: Option<PathBuf>,

    /// Single training seed (config files may list several)
    #[arg(long)]
    seed: Option<u64>,

    /// Restrict to one domain
    #[arg(long)]
    domain: Option<String>,

    /// Training beam width
    #[arg(long)]
    beam_width: Option<usize>,

    /// Reward signal for weak supervision
    #[arg(long, value_parser = ["denotation", "string-match"])]
    reward_mode: Option<String>,

    /// Fraction of training data whose gold programs seed a pretraining phase
    #[arg(long)]
    parallel_fraction: Option<f64>,
}

impl RunArgs {
    fn into_flags(self) -> RunFlags {
        RunFlags {
            corpus: self.corpus,
            out: self.out,
            seed: self.seed,
            domain: self.domain,
            beam_width: self.beam_width,
            reward_mode: self.reward_mode,
            parallel_fraction: self.parallel_fraction,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain corpus
    GenData {
        /// Domain bundle: "default" or a path to a bundle spec JSON
        #[arg(long)]
        spec: Option<String>,

        /// Instances per domain
        #[arg(long)]
        per_domain: Option<usize>,

        /// Generation seed
        #[arg(long)]
        seed: Option<u64>,

        /// Corpus output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Train one weakly supervised teacher per domain
    TrainTeacher(RunArgs),

    /// Train one weakly supervised parser on all domains pooled
    TrainCombined(RunArgs),

    /// Distill teacher parsers into a single student
    Distill {
        #[command(flatten)]
        args: RunArgs,

        /// Comma-separated teacher checkpoint files
        #[arg(long)]
        teachers: Option<String>,
    },

    /// Evaluate a checkpoint on a corpus test split
    Eval {
        /// Checkpoint file, or a directory holding one
        #[arg(long)]
        model: Option<PathBuf>,

        /// Corpus directory
        #[arg(long)]
        corpus: Option<PathBuf>,

        /// Decoding beam width (default 1, greedy)
        #[arg(long)]
        beam_width: Option<usize>,

        /// Restrict to one domain
        #[arg(long)]
        domain: Option<String>,

        /// Result file (default: next to the checkpoint)
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Normalize original-form parses (one per line) into tokens + entity map
    Normalize {
        /// Text file with one s-expression parse per line
        input: PathBuf,

        /// JSONL output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Print per-domain corpus statistics
    Stats {
        /// Corpus directory
        #[arg(long)]
        corpus: PathBuf,
    },

    /// Render result files into a comparison table
    Report {
        /// Result JSON files (from the train commands or eval)
        inputs: Vec<PathBuf>,

        /// Also write the table as JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::GenData { spec, per_domain, seed, out } => {
            commands::gen_data(GenFlags { spec, per_domain, seed, out }, config)
        }
        Command::TrainTeacher(args) => commands::train_teacher(args.into_flags(), config),
        Command::TrainCombined(args) => commands::train_combined(args.into_flags(), config),
        Command::Distill { args, teachers } => {
            commands::distill(args.into_flags(), teachers.as_deref(), config)
        }
        Command::Eval { model, corpus, beam_width, domain, out } => commands::eval(
            EvalFlags { model, corpus, beam_width, domain, out },
            config,
        ),
        Command::Normalize { input, out } => commands::normalize(&input, out.as_deref()),
        Command::Stats { corpus } => commands::stats(&corpus),
        Command::Report { inputs, out } => commands::report(&inputs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests print to stdout and exit cleanly;
            // everything else is a usage error.
            err.print().ok();
            return if err.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, e.msg);
            ExitCode::from(e.code as u8)
        }
    }
}
