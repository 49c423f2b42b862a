use std::path::PathBuf;

use microclust_core::assignment::ScaleConvention;
use microclust_core::popest::{
    beta_b_for_target, popest_replicate, summarize_popest, CoverageTarget, EstimateOptions,
    IntervalMethod, PopestSimConfig, PopestSummary, ReplicateOutcome, DEFAULT_MAX_ITER,
};
use serde::{Deserialize, Serialize};

use super::{num, write_csv, RunContext};
use crate::error::{CliError, Result};
use crate::grid::GridSetting;
use crate::manifest::write_json;

pub const OUTPUT: &str = "popest_sim.csv";
pub const SUMMARY: &str = "popest_summary.json";
pub const HEADER: [&str; 9] = [
    "c",
    "replicate",
    "prop_correct",
    "covered",
    "n0_true",
    "n0_hat",
    "ci_lo",
    "ci_hi",
    "mse_nx",
];
pub const DEFAULT_TARGET_N0_FRAC: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopestSimSettings {
    /// Entities `K`.
    pub k: usize,
    /// Lists `T`.
    pub t: usize,
    pub a: f64,
    /// Beta shape; solved from `target_n0_frac` when absent.
    pub b: Option<f64>,
    pub target_n0_frac: Option<f64>,
    pub c_grid: GridSetting,
    pub replicates: usize,
    pub scale: ScaleConvention,
    pub interval: IntervalMethod,
    pub coverage_target: CoverageTarget,
    pub max_iter: usize,
}

impl Default for PopestSimSettings {
    fn default() -> Self {
        Self {
            k: 5000,
            t: 3,
            a: 1.0,
            b: None,
            target_n0_frac: None,
            c_grid: GridSetting::Spec("0.1:2:0.1".into()),
            replicates: 200,
            scale: ScaleConvention::Sigma,
            interval: IntervalMethod::LogNormal,
            coverage_target: CoverageTarget::Population,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl PopestSimSettings {
    /// Fills in `b` from the target unobserved fraction.
    pub fn resolved(&self) -> Result<Self> {
        let mut s = self.clone();
        match (s.b, s.target_n0_frac) {
            (Some(b), Some(target)) => {
                let solved = beta_b_for_target(s.a, s.t, target)?;
                if (b - solved).abs() > 1e-12 * solved {
                    return Err(CliError::Usage(
                        "give either b or target-n0-frac, not both".into(),
                    ));
                }
            }
            (Some(_), None) => {}
            (None, target) => {
                let target = target.unwrap_or(DEFAULT_TARGET_N0_FRAC);
                s.target_n0_frac = Some(target);
                s.b = Some(beta_b_for_target(s.a, s.t, target)?);
            }
        }
        Ok(s)
    }

    fn config(&self, c: f64, seed: u64) -> Result<PopestSimConfig> {
        let b = self
            .b
            .ok_or_else(|| CliError::Internal("b is unresolved".into()))?;
        let cfg = PopestSimConfig {
            scale: self.scale,
            estimate: EstimateOptions {
                interval: self.interval,
                max_iter: self.max_iter,
            },
            target: self.coverage_target,
            ..PopestSimConfig::new(self.k, self.t, self.a, b, c, self.replicates, seed)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Replicate outcomes per grid point, with their summaries.
pub fn simulate(
    settings: &PopestSimSettings,
    ctx: &RunContext,
) -> Result<Vec<(PopestSummary, Vec<ReplicateOutcome>)>> {
    let settings = settings.resolved()?;
    let configs = settings
        .c_grid
        .resolve()?
        .into_iter()
        .map(|c| settings.config(c, ctx.seed))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|g| (0..settings.replicates as u64).map(move |r| (g, r)))
        .collect();
    let outcomes = ctx.par_map(tasks, |(g, r)| popest_replicate(&configs[g], r));
    let mut outcomes = outcomes.into_iter();
    configs
        .iter()
        .map(|cfg| {
            let mine = outcomes
                .by_ref()
                .take(settings.replicates)
                .collect::<Result<Vec<_>, _>>()?;
            Ok((summarize_popest(cfg.c, &mine)?, mine))
        })
        .collect()
}

fn covered(o: &ReplicateOutcome) -> String {
    match o.covered {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => "NA".into(),
    }
}

pub fn run(settings: &PopestSimSettings, ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let resolved = settings.resolved()?;
    ctx.record("popest-sim", &resolved, |ctx| {
        let results = simulate(&resolved, ctx)?;
        let mut rows = Vec::new();
        for (summary, outcomes) in &results {
            for o in outcomes {
                rows.push(vec![
                    num(summary.c),
                    o.replicate.to_string(),
                    num(o.prop_correct),
                    covered(o),
                    o.n0_true.to_string(),
                    num(o.n0_hat),
                    num(o.ci_lo),
                    num(o.ci_hi),
                    num(o.mse_nx),
                ]);
            }
        }
        let csv_path = ctx.path(OUTPUT);
        write_csv(&csv_path, &HEADER, &rows)?;
        let summaries: Vec<&PopestSummary> = results.iter().map(|(s, _)| s).collect();
        let json_path = ctx.path(SUMMARY);
        write_json(&json_path, &summaries)?;
        Ok(vec![csv_path, json_path])
    })
}
