mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand};
use typelink::eval::Regime;

#[derive(Parser, Debug)]
#[command(name = "typelink", version, about = "Single-pass entity linking over a typed knowledge base")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Seed for every stochastic step (init, masking, subsampling).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// JSON config file; keys not present keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. `--set learning_rate=0.003`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Worker threads for document-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Check gold entity ids against the knowledge base before any work.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Report wall time as 0 so reports are byte-comparable.
    #[arg(long, global = true)]
    pub no_timing: bool,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Freeze an entity file (and optional hierarchy) into a KB container.
    BuildKb {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Output of `select-types`; restricts the type vocabulary.
        #[arg(long)]
        types: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedily choose the types that best separate gold entities from
    /// their candidates.
    SelectTypes {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// Defaults to the config's `entity_type_budget`.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write a resumable checkpoint.
    Train {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSONL training log, one line per step.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue from a checkpoint with its saved config and seed.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also write the checkpoint every N steps.
        #[arg(long, value_name = "N")]
        checkpoint_every: Option<u64>,
        /// Stop after N steps of this invocation; `--resume` continues.
        #[arg(long, value_name = "N")]
        max_steps: Option<u64>,
    },
    /// Detect and link mentions; one JSON document per output line.
    Link(InferArgs),
    /// Link the input's own mention spans.
    Disambiguate(InferArgs),
    /// Link and disambiguate a gold corpus and report the metrics.
    Evaluate {
        #[command(flatten)]
        io: InferArgs,
        /// Training corpus; its gold entities form the seen split.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Count encoder passes under each inference regime.
    Bench {
        #[command(flatten)]
        io: InferArgs,
        /// One of single_pass, bi_encoder, cross_encoder; all when omitted.
        #[arg(long)]
        regime: Option<Regime>,
    },
    /// Write a generated knowledge base and corpus.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 800)]
        docs: usize,
        #[arg(long, default_value_t = 10)]
        groups: usize,
        #[arg(long, default_value_t = 0)]
        held_out_groups: usize,
        #[arg(long, default_value_t = 0)]
        held_out_per_group: usize,
        /// Also write `bench.jsonl` with this many single-chunk documents.
        #[arg(long, requires = "bench_mentions")]
        bench_docs: Option<usize>,
        #[arg(long, requires = "bench_docs")]
        bench_mentions: Option<usize>,
    },
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
