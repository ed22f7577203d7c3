use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use termlab::harness::{compare, run_experiment, ExperimentConfig, HarnessError, RunSummary};
use termlab::{Algo, Handler};

#[derive(Parser)]
#[command(name = "termlab", version, about = "Compare terminal-state handlers for TD targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every (handler, seed) pair of a config.
    Run(RunArgs),
    /// Tabulate saved summaries and flag clearly worse cells.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<Algo>,
    /// One handler or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    handler: Option<Vec<Handler>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    offset: Option<f64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Training episodes per seed.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// `summary.json` files to compare.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(env) = &self.env {
            cfg.env = env.clone();
        }
        if let Some(algo) = self.algo {
            cfg.algo = algo;
        }
        if let Some(h) = &self.handler {
            cfg.handlers = h.clone();
        }
        cfg.gamma = self.gamma.unwrap_or(cfg.gamma);
        cfg.lambda = self.lambda.unwrap_or(cfg.lambda);
        cfg.offset = self.offset.unwrap_or(cfg.offset);
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if self.episodes.is_some() {
            cfg.episodes = self.episodes;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> Result<(), HarnessError> {
    let cfg = args.resolve()?;
    let summaries = run_experiment(&cfg)?;
    for s in &summaries {
        if s.diverged_seeds > 0 {
            eprintln!("warning: {} {}: {} seed(s) diverged", s.algo, s.handler, s.diverged_seeds);
        }
    }
    print!("{}", compare(&summaries)?.to_text());
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

fn compare_cmd(args: &CompareArgs) -> Result<(), HarnessError> {
    let summaries = args
        .inputs
        .iter()
        .map(|p| RunSummary::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let table = compare(&summaries)?;
    print!("{}", table.to_text());
    if let Some(path) = &args.csv {
        std::fs::write(path, table.to_csv()?).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
