use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Energy-efficient sleeping policies for object tracking: tables, tradeoff
/// sweeps and single-episode replays.
#[derive(Debug, Parser)]
#[command(name = "sleeptrack", version)]
struct Cli {
    /// Worker threads for parallel runs (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a T^Δ table and write it to a file.
    Tables(TablesArgs),
    /// Simulate policies over a price grid and write tradeoff CSV.
    Sweep(SweepArgs),
    /// Replay one episode and dump its per-step trace.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
struct NetworkArgs {
    /// Builtin network: A, B or C.
    #[arg(long)]
    network: Option<String>,

    /// TOML file with a [network] and/or [run] section.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, env = "SLEEPTRACK_SEED")]
    seed: Option<u64>,

    /// Particles per belief on continuous networks.
    #[arg(long)]
    particles: Option<usize>,

    /// Monte-Carlo samples per table entry.
    #[arg(long)]
    samples: Option<usize>,

    /// Longest sleep a policy may choose (default: twice the lifetime).
    #[arg(long)]
    u_max: Option<usize>,
}

#[derive(Debug, Args)]
struct TablesArgs {
    #[command(flatten)]
    net: NetworkArgs,

    /// Baseline: asleep, greedy or learned.
    #[arg(long, alias = "tdelta", default_value = "greedy")]
    source: String,

    /// Energy price the table is built for.
    #[arg(long, default_value_t = 0.1)]
    c: f64,

    /// Policy that drives a learning campaign.
    #[arg(long, default_value = "qmdp")]
    policy: String,

    /// Output table file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    net: NetworkArgs,

    /// Policies, comma separated: all-awake, all-asleep, fcr, qmdp. A table
    /// policy may carry its own source, as in qmdp-asleep.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,

    /// Default T^Δ source: asleep, greedy, learned, or a table file.
    #[arg(long)]
    tdelta: Option<String>,

    /// Energy prices, comma separated and increasing.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,

    /// Episodes per point (recorded episodes for learned curves).
    #[arg(long)]
    runs: Option<usize>,

    /// Append hypothesis-testing lower-bound rows.
    #[arg(long)]
    lower_bound: bool,

    /// CSV output; a gnuplot script is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    net: NetworkArgs,

    #[arg(long, default_value = "qmdp")]
    policy: String,

    /// T^Δ source: asleep, greedy, or a table file.
    #[arg(long, default_value = "greedy")]
    tdelta: String,

    #[arg(long, default_value_t = 0.1)]
    c: f64,

    /// Run index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    run: u32,

    /// Trace CSV output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sleeptrack::Error),
    #[error("{}: {source}", .path.display())]
    File { path: PathBuf, source: sleeptrack::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use sleeptrack::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) | CliError::File { source: e, .. } => match e {
                E::InvalidArgument(_) | E::Config(_) | E::Model(_) | E::Unsupported(_) | E::RunawayEpisode(_) => 3,
                E::NonConvergence { .. } => 4,
                E::Io(_) | E::Csv(_) | E::Parse(_) => 5,
                E::Inconsistent { .. } | E::EstimatorUndefined => 1,
            },
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Tables(args) => commands::tables(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Replay(args) => commands::replay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
