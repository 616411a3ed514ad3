use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::CliError;

/// Federated coupled nonnegative CP decomposition.
#[derive(Parser, Debug)]
#[command(name = "fcncp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the two-client simulation tensors, their ground truth and a run config.
    Synth(SynthArgs),
    /// Nonnegative CP decomposition of a single tensor.
    Decompose(DecomposeArgs),
    /// Number of principal components explaining a share of a mode's variance.
    Rank(RankArgs),
    /// Cross-client correlation report between two exported factor sets.
    Corr(CorrArgs),
    /// Federated runs.
    #[command(subcommand)]
    Fed(FedCommand),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Amplitude of the uniform noise added to the atoms.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Hanning window half-width, in samples.
    #[arg(long, default_value_t = 8)]
    half_width: usize,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Stop once successive relative errors differ by less than this.
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random starts tried during initialization.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// Compute MTTKRP through an unconstrained CP basis.
    #[arg(long)]
    fast: bool,
    /// Directory for `mode_N.csv` factor exports.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    tensor: PathBuf,
    /// 1-based mode whose entries are the PCA variables.
    #[arg(long)]
    mode: usize,
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct CorrArgs {
    /// Factor directory of client 1.
    #[arg(long)]
    factors1: PathBuf,
    /// Factor directory of client 2.
    #[arg(long)]
    factors2: PathBuf,
    /// 1-based modes to correlate, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    modes: Vec<usize>,
    /// Also print the greedy selection of this many pairs.
    #[arg(long)]
    select: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum FedCommand {
    /// Server and both clients in this process.
    Run(FedRunArgs),
    /// Serve one run over TCP.
    Server(FedServerArgs),
    /// Join a TCP run as one client.
    Client(FedClientArgs),
}

#[derive(Args, Debug)]
struct FedRunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for the report and factor exports.
    #[arg(long, default_value = "fcncp-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FedServerArgs {
    #[arg(long)]
    config: PathBuf,
    /// Address to listen on; overrides `listen` in the config.
    #[arg(long)]
    listen: Option<String>,
    /// Directory for the server report and correlation maps.
    #[arg(long, default_value = "fcncp-server")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FedClientArgs {
    #[arg(long)]
    config: PathBuf,
    /// Which client section of the config to play (1 or 2).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    client: u8,
    /// Server address; overrides `connect` in the config.
    #[arg(long)]
    connect: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a.out, a.seed, a.noise, a.half_width),
        Command::Decompose(a) => commands::decompose(&a),
        Command::Rank(a) => commands::rank(&a.tensor, a.mode, a.threshold),
        Command::Corr(a) => commands::corr(&a.factors1, &a.factors2, &a.modes, a.select, &a.out),
        Command::Fed(FedCommand::Run(a)) => commands::fed_run(&a.config, &a.out),
        Command::Fed(FedCommand::Server(a)) => commands::fed_server(&a.config, a.listen.as_deref(), &a.out),
        Command::Fed(FedCommand::Client(a)) => {
            commands::fed_client(&a.config, a.client as usize - 1, a.connect.as_deref(), &a.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FCNCP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fcncp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
