//! `multibc`: run, validate and post-process experiment configs.
//!
//! Exit codes: 0 on success, 2 for config or usage errors, 3 for numerical
//! failures. Progress goes to stderr; stdout carries machine-readable output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use multibc::experiment::{self, ExperimentConfig, PlotKind, KINDS, PLOT_KINDS};
use multibc::Error;

#[derive(Parser)]
#[command(name = "multibc", version, about = "Shrinking-target and lattice-counting experiments")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "MULTIBC_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config and write its results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Result directory; overrides `output.dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Project a finished run onto columnar plot files.
    EmitPlotdata {
        /// Directory of a completed run.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_parser = PLOT_KINDS)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config against the schema without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the experiment kinds, one per line.
    ListExperiments,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).target(env_logger::Target::Stderr).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(path: &Path) -> multibc::Result<(ExperimentConfig, Vec<u8>)> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config { path: path.display().to_string(), msg: io.to_string() },
        other => other,
    })
}

fn dispatch(cli: Cli) -> multibc::Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Domain("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| Error::Resource(e.to_string()))?;
    }
    match cli.cmd {
        Cmd::Run { config, out, seed_override } => {
            let (mut cfg, bytes) = load(&config)?;
            if let Some(s) = seed_override {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
                .ok_or_else(|| Error::Config { path: "output.dir".into(), msg: "no output directory; pass --out".into() })?;
            let rec = experiment::execute(&cfg, &bytes, &dir)?;
            info!("{} finished in {:.1}s, results in {}", rec.id, rec.wall_time_s, dir.display());
            print!("{}", String::from_utf8_lossy(&experiment::summary_csv(&rec.summary)?));
        }
        Cmd::EmitPlotdata { results, kind, out } => {
            let kind: PlotKind = kind.parse()?;
            for p in experiment::emit_plotdata(&results, kind, &out)? {
                println!("{}", p.display());
            }
        }
        Cmd::Validate { config } => {
            let (cfg, _) = load(&config)?;
            println!("{}: ok ({})", cfg.id, cfg.experiment.kind());
        }
        Cmd::ListExperiments => {
            for k in KINDS {
                println!("{k}");
            }
        }
    }
    Ok(())
}
