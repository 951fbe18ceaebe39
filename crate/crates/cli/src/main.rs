use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dynkin_cli::{init_threads, run, Mode, RunManifest, Source};

/// Solver, simulator and verifier for zero-sum Dynkin games on 1-D diffusions.
#[derive(Debug, Parser)]
#[command(name = "dynkin", version)]
struct Args {
    #[arg(long, value_enum, default_value = "solve")]
    mode: Mode,
    /// Problem config (JSON).
    #[arg(long, conflicts_with = "example")]
    config: Option<PathBuf>,
    /// Built-in example id, e.g. ex_4_4.
    #[arg(long)]
    example: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    grid_n: Option<usize>,
    /// Relative solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Forces epsilon-calibrated strategies.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Start point for simulations.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
}

fn main() -> ExitCode {
    let a = Args::parse();
    init_threads();
    let source = match (a.config, a.example) {
        (Some(p), _) => Source::Config(p),
        (None, Some(id)) => Source::Example(id),
        (None, None) => Source::Corpus,
    };
    let m = RunManifest {
        mode: a.mode,
        source,
        out: a.out,
        grid_n: a.grid_n,
        tol: a.tol,
        epsilon: a.epsilon,
        paths: a.paths,
        dt: a.dt,
        seed: a.seed,
        x0: a.x0,
    };
    match run(&m) {
        Ok(out) => {
            for msg in &out.messages {
                println!("{msg}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
