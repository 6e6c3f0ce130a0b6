use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use jacobi_loc::experiment::output::{manifest, write_run};
use jacobi_loc::experiment::{run, ExperimentConfig, RunError, Subcommand, Verdict};

/// Numerical experiments on localization of random Jacobi operators.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// TOML config with dotted keys; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV files, summary.json and manifest.toml.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed_override: Option<u64>,
    /// Also evaluate every kernel certificate on the refined grid.
    #[arg(long)]
    refine: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| RunError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed_override {
        cfg = cfg.with_seed(seed).map_err(|e| RunError::Config(e.to_string()))?;
    }
    if cli.refine {
        cfg = cfg.with_refine();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Verdict, RunError> {
    if cli.workers == Some(0) {
        return Err(RunError::Config("--workers must be at least 1".into()));
    }
    let cfg = load(cli)?;
    eprint!("{}", cfg.echo());
    let output = run(cli.command, &cfg, cli.workers)?;
    write_run(&cli.out, &output.files, &manifest(cli.command.name(), &cfg))
        .map_err(|e| RunError::Io(format!("{}: {e}", cli.out.display())))?;
    Ok(output.verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Verdict::Pass) => {
            println!("{}: PASS", cli.command.name());
            ExitCode::SUCCESS
        }
        Ok(Verdict::Inconclusive(why)) => {
            println!("{}: INCONCLUSIVE: {why}", cli.command.name());
            ExitCode::from(3)
        }
        Ok(Verdict::Fail(why)) => {
            println!("{}: FAIL: {why}", cli.command.name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
