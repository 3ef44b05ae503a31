use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use porohom::harness::{self, EXIT_OK, EXIT_VALIDATION};

/// Run one registered experiment and write its CSVs and manifest.
#[derive(Parser, Debug)]
#[command(name = "porohom", version, about)]
struct Cli {
    /// One of: mollifier-props, poincare-scaling, extension-bounds, micro-sim, cell-problems, eps-convergence.
    experiment: String,
    /// Config file with [experiment], [grid] and [material] sections.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random fields; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("POROHOM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("POROHOM_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("POROHOM_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            return ExitCode::from(code as u8);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("{msg}");
        return ExitCode::from(EXIT_VALIDATION as u8);
    }
    let code = harness::run_from_cli(&cli.experiment, &cli.config, cli.out, cli.seed);
    ExitCode::from(code as u8)
}
