use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shapaudit_cli::{cmd_run, cmd_sgae, cmd_validate, cmd_xq, load_context, CliError};

/// Explanation-reliability audits for fraud scorers: scoring runs,
/// faithfulness/stability/agreement batteries, and attribution-guided
/// adaptive ensembling.
#[derive(Parser)]
#[command(name = "shapaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file and its leakage rules without running anything.
    Validate(CommonArgs),
    /// Ingest, split, fit, score, and report metrics (per fold when
    /// configured).
    Run(CommonArgs),
    /// Explanation-quality battery: faithfulness, stability, agreement.
    Xq(CommonArgs),
    /// Adaptive blend of two scorers guided by attribution agreement.
    Sgae(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores). Results
    /// are identical at any thread count.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let args = match &cli.command {
        Command::Validate(a) | Command::Run(a) | Command::Xq(a) | Command::Sgae(a) => a,
    };
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let context = match load_context(&args.config, args.out.clone(), args.seed) {
        Ok(c) => c,
        Err(e) => return report_error(e),
    };

    let outcome = match cli.command {
        Command::Validate(_) => cmd_validate(&context).map(|report| {
            print!("{report}");
        }),
        Command::Run(_) => cmd_run(&context).map(finish),
        Command::Xq(_) => cmd_xq(&context).map(finish),
        Command::Sgae(_) => cmd_sgae(&context).map(finish),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(e),
    }
}

fn finish(manifest: shapaudit_cli::RunManifest) {
    for output in manifest.all_outputs() {
        println!("{}", output.display());
    }
}

fn report_error(e: CliError) -> ExitCode {
    eprintln!("{e}");
    match e {
        CliError::Validation(_) => ExitCode::from(1),
        CliError::Runtime(_) => ExitCode::from(2),
    }
}
