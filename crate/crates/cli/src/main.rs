use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use concentra_cli::config::{self, Command, ExperimentConfig, Overrides};
use concentra_cli::error::{CliError, EXIT_OK};
use concentra_cli::output::{write_all, Artifact};

/// Gaussian concentration and small-ball experiments.
#[derive(Debug, Parser)]
#[command(name = "concentra", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "CONCENTRA_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Balancing tolerance for `position`.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for `position`.
    #[arg(long)]
    max_iter: Option<usize>,
}

fn fail(e: &CliError, out: Option<&std::path::Path>) -> ExitCode {
    let diag = e.diagnostics();
    eprintln!("{diag}");
    // Invalid configurations leave no files behind.
    if e.exit_code() != 2 {
        if let Some(dir) = out {
            if let Ok(a) = Artifact::json("error.json", &diag) {
                let _ = write_all(dir, &[a]);
            }
        }
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let ov = Overrides {
        seed: args.seed,
        samples: args.samples,
        threads: args.threads,
        out: args.out.clone(),
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let file = match &args.config {
        Some(p) => config::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let run = match file.and_then(|f| config::resolve(args.command, f, &ov)) {
        Ok(r) => r,
        Err(e) => return fail(&e, None),
    };
    let outcome = match concentra_cli::execute(&run) {
        Ok(o) => o,
        Err(e) => return fail(&e, Some(&run.out)),
    };
    if let Err(e) = write_all(&run.out, &outcome.artifacts) {
        return fail(&e, None);
    }
    println!("{}", outcome.summary);
    if outcome.exit_code == EXIT_OK {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(outcome.exit_code as u8)
    }
}
