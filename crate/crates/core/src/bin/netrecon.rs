use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netrecon::pipeline::{self, BenchConfig, CompareConfig, GenerateConfig, ReconstructConfig, SampleConfig};
use netrecon::Error;

/// Bayesian network reconstruction from node dynamics.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads for chains and candidate scoring (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Planted network and simulated data.
    Generate(Args),
    /// Greedy MAP estimate and typical edge set.
    Reconstruct(Args),
    /// Posterior sampling: marginals, MP estimate, diagnostics.
    Sample(Args),
    /// Correlation baselines against posterior marginals.
    Compare(Args),
    /// Autocorrelation time against N for several proposal mixtures.
    BenchScaling(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> netrecon::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let man = match &cli.cmd {
        Cmd::Generate(a) => pipeline::cmd_generate(&pipeline::load_config::<GenerateConfig>(&a.config)?, &a.out)?,
        Cmd::Reconstruct(a) => pipeline::cmd_reconstruct(&pipeline::load_config::<ReconstructConfig>(&a.config)?, &a.out)?,
        Cmd::Sample(a) => pipeline::cmd_sample(&pipeline::load_config::<SampleConfig>(&a.config)?, &a.out)?,
        Cmd::Compare(a) => pipeline::cmd_compare(&pipeline::load_config::<CompareConfig>(&a.config)?, &a.out)?,
        Cmd::BenchScaling(a) => pipeline::cmd_bench_scaling(&pipeline::load_config::<BenchConfig>(&a.config)?, &a.out)?,
    };
    for f in &man.outputs {
        println!("{}\t{}", f.sha256, f.path);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
