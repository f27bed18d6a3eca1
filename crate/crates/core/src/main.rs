use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use topobeta::runner::{execute, exit_status, parse_config, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "topobeta", version, about = "Topology optimization with automatic projection continuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Iteration cap (overrides `run.max_iters`).
        #[arg(long)]
        max_iters: Option<usize>,
        /// Single scheme to run: automatic, default, modified or constant.
        #[arg(long)]
        scheme: Option<String>,
    },
}

fn run(config: PathBuf, out: Option<PathBuf>, max_iters: Option<usize>, scheme: Option<String>) -> topobeta::Result<i32> {
    let text = std::fs::read_to_string(&config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(name) = scheme {
        cfg = cfg.with_scheme(&name)?;
    }
    if let Some(n) = max_iters {
        if n == 0 {
            return Err(topobeta::Error::Config("--max-iters must be at least 1".into()));
        }
        cfg.limits.max_iterations = n;
    }
    let out = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let summaries = execute(&cfg, &out)?;
    for s in &summaries {
        println!("{}: {} after {} iterations, beta {}, gray {:.2e}", s.scheme, s.termination.as_str(), s.iterations, s.beta, s.gray);
    }
    Ok(exit_status(&summaries))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run { config, out, max_iters, scheme } => run(config, out, max_iters, scheme),
    };
    match status {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
