use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perc_cli::{load_spec, run_experiment, CliError, Kind, RunOptions};

#[derive(Parser)]
#[command(name = "perc", version, about = "Percolation random-walk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec in TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory, overriding the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed, overriding the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one configuration and write its snapshot.
    Sample(Common),
    /// Chemical-distance statistics and a chemical ball.
    Geometry(Common),
    /// Isoperimetric and Poincare constants of cluster pieces.
    Inequalities(Common),
    /// Failure-frequency tails of a renormalization event.
    Events(Common),
    /// Exact heat kernel, displacement and Nash curves.
    Kernel(Common),
    /// On-diagonal and Gaussian envelope fits.
    Bounds(Common),
    /// Oscillation decay and Harnack ratios of Dirichlet solutions.
    Harnack(Common),
    /// Merge artifact directories into aggregated tables.
    Report {
        #[command(flatten)]
        common: Common,
        /// Artifact directories, appended to those listed in the spec.
        dirs: Vec<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    let (kind, common, dirs) = match cli.command {
        Command::Sample(c) => (Kind::Sample, c, vec![]),
        Command::Geometry(c) => (Kind::Geometry, c, vec![]),
        Command::Inequalities(c) => (Kind::Inequalities, c, vec![]),
        Command::Events(c) => (Kind::Events, c, vec![]),
        Command::Kernel(c) => (Kind::Kernel, c, vec![]),
        Command::Bounds(c) => (Kind::Bounds, c, vec![]),
        Command::Harnack(c) => (Kind::Harnack, c, vec![]),
        Command::Report { common, dirs } => (Kind::Report, common, dirs),
    };
    let mut spec = load_spec(kind, common.spec.as_deref(), common.out, common.seed)?;
    spec.report.inputs.extend(dirs);
    let (out, _) = run_experiment(&spec, RunOptions { threads: common.threads })?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(out) => {
            println!("{}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
