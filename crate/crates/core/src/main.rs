use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fockscatter::config::parse_config;
use fockscatter::pipeline::{run_pipeline, Stage};

#[derive(Parser)]
#[command(version, about = "Truncated Fock-space scattering laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the basis and assemble the regularized Hamiltonian
    Build(Common),
    /// Propagate a basis state and compare against the dense exponential
    Evolve(Common),
    /// Compute both wave operators and their certification defects
    Waveops(Common),
    /// Wave operators followed by the scattering operator and channel table
    Smatrix(Common),
    /// Dyson partial sums and the damped Born comparison
    Dyson(Common),
    /// Double-limit study over ranks and cutoffs, plus the horizon study
    Converge(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages
    #[arg(long)]
    workers: Option<usize>,
    /// Tolerance override, `stage=value` (evolution, waveops, dyson, converge, horizon)
    #[arg(long = "tol", value_name = "STAGE=VALUE")]
    tol: Vec<String>,
}

fn run(stage: Stage, args: Common) -> anyhow::Result<bool> {
    if let Some(n) = args.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = parse_config(&args.config)?;
    for o in &args.tol {
        let (name, value) = o
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--tol expects STAGE=VALUE, got `{o}`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("--tol {name}: {e}"))?;
        cfg.override_tolerance(name.trim(), value)?;
    }
    let out = args.out.unwrap_or_else(|| cfg.output.dir.clone());
    let manifest = run_pipeline(&cfg, stage, &out)?;
    for f in &manifest.files {
        println!("wrote {}", out.join(&f.name).display());
    }
    for f in &manifest.failures {
        eprintln!("certification failed: {f}");
    }
    Ok(manifest.certified())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Build(a) => (Stage::Build, a),
        Command::Evolve(a) => (Stage::Evolve, a),
        Command::Waveops(a) => (Stage::Waveops, a),
        Command::Smatrix(a) => (Stage::Smatrix, a),
        Command::Dyson(a) => (Stage::Dyson, a),
        Command::Converge(a) => (Stage::Converge, a),
    };
    match run(stage, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
