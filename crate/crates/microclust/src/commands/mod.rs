//! Subcommand implementations. Each takes resolved settings and a
//! [`RunContext`] and returns the paths it wrote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::{now, RunManifest};

pub mod assign;
pub mod bayes;
pub mod dim;
pub mod names;
pub mod popest;
pub mod theory;

pub struct RunContext {
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
    pool: rayon::ThreadPool,
}

impl RunContext {
    /// `jobs = None` uses every available core.
    pub fn new(seed: u64, jobs: Option<usize>, out_dir: PathBuf) -> Result<Self> {
        if jobs == Some(0) {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        Ok(Self {
            seed,
            jobs: pool.current_num_threads(),
            out_dir,
            pool,
        })
    }

    /// Maps `f` over `items` on the worker pool, keeping input order.
    pub fn par_map<T, U, F>(&self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Send + Sync,
    {
        self.pool
            .install(|| items.into_par_iter().map(f).collect())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Runs `body`, then writes the manifest listing its outputs.
    pub fn record<S, F>(&self, subcommand: &str, settings: &S, body: F) -> Result<Vec<PathBuf>>
    where
        S: Serialize,
        F: FnOnce(&Self) -> Result<Vec<PathBuf>>,
    {
        let started_at = now();
        let mut outputs = body(self)?;
        let config = serde_json::to_value(settings)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let manifest = RunManifest {
            subcommand: subcommand.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            jobs: self.jobs,
            config,
            started_at,
            finished_at: now(),
            outputs: outputs.clone(),
        };
        outputs.push(manifest.write(&self.out_dir)?);
        Ok(outputs)
    }
}

/// Formats a float for CSV: shortest round-trip decimal, `NaN`, `inf`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        x.to_string()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: csv::Error| CliError::data(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
