//! Config-driven experiment runs with reproducible, atomically written
//! results.
//!
//! A run reads a TOML [`ExperimentConfig`], executes it with [`run_experiment`]
//! and persists the [`RunOutput`] with [`execute`]. Payload files (CSV and
//! JSON-lines) depend only on the config and seed, never on the worker count.

mod config;
mod output;
mod plot;
mod run;

use std::path::Path;
use std::time::Instant;

pub use config::*;
pub use output::*;
pub use plot::{curves, emit_plotdata, render, Curve, PlotKind, PLOT_KINDS};
pub use run::{radius_for_rate, run_experiment};

use crate::error::Result;

/// Runs `cfg` and writes its results to `dir`. `config_bytes` are the raw
/// file contents the config hash is taken from.
pub fn execute(cfg: &ExperimentConfig, config_bytes: &[u8], dir: &Path) -> Result<ResultRecord> {
    let start = Instant::now();
    let out = run_experiment(cfg)?;
    let record = ResultRecord {
        id: cfg.id.clone(),
        kind: cfg.experiment.kind().to_string(),
        schema_version: cfg.schema_version,
        config_hash: content_hash(config_bytes),
        seed: cfg.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        summary: out.summary.clone(),
        files: Vec::new(),
    };
    write_run(dir, &out, record, cfg.output.records)
}
