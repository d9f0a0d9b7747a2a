use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use bas_cli::commands::{cmd_bench, cmd_fit, cmd_rmse, cmd_run};
use bas_cli::{exit_code, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bas", version, about = "Bayesian adaptive sampling with treed GP surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a surrogate to a data file or a fixed benchmark design.
    Fit(Args),
    /// Run one adaptive sampling campaign on the simulated cluster.
    Run(Args),
    /// Run the model / candidate / heuristic grid.
    Bench(Args),
    /// Score a design against the benchmark truth.
    Rmse(Args),
}

#[derive(clap::Args)]
struct Args {
    /// key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the file's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Fit(args) | Command::Run(args) | Command::Bench(args) | Command::Rmse(args)) = &cli.command;
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let result = RunConfig::parse(&text, args.seed).and_then(|cfg| {
        let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
        match &cli.command {
            Command::Fit(_) => cmd_fit(&cfg, &out),
            Command::Run(_) => cmd_run(&cfg, &out),
            Command::Bench(_) => cmd_bench(&cfg, &out),
            Command::Rmse(_) => cmd_rmse(&cfg, &out).map(|(e, files)| {
                println!("rmse {e}");
                files
            }),
        }
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
