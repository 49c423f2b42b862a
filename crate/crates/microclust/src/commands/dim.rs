use std::path::PathBuf;

use microclust_core::assignment::{
    dimension_replicate, summarize_dimension, DimensionSimConfig, DimensionSimResult,
    SphericalMixtureP,
};
use serde::{Deserialize, Serialize};

use super::{num, write_csv, RunContext};
use crate::error::{CliError, Result};
use crate::grid::GridSetting;

pub const OUTPUT: &str = "dim_sim.csv";
pub const HEADER: [&str; 10] = [
    "N",
    "p",
    "sigma",
    "delta",
    "replicates",
    "prop_correct",
    "prop_se",
    "lower",
    "upper",
    "within",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimSimSettings {
    pub n: usize,
    pub p_grid: Vec<usize>,
    pub sigma_grid: GridSetting,
    pub replicates: usize,
}

impl Default for DimSimSettings {
    fn default() -> Self {
        Self {
            n: 64,
            p_grid: vec![1, 2, 3],
            sigma_grid: GridSetting::Spec("0.01,0.05,0.3".into()),
            replicates: 50,
        }
    }
}

pub fn simulate(settings: &DimSimSettings, ctx: &RunContext) -> Result<Vec<DimensionSimResult>> {
    if settings.p_grid.is_empty() {
        return Err(CliError::Usage("p grid is empty".into()));
    }
    let sigmas = settings.sigma_grid.resolve()?;
    let mut points = Vec::new();
    for &dim in &settings.p_grid {
        for &sigma in &sigmas {
            let cfg = DimensionSimConfig {
                n: settings.n,
                dim,
                sigma,
                replicates: settings.replicates,
                seed: ctx.seed,
            };
            cfg.validate()?;
            let mix = SphericalMixtureP::lattice(cfg.n, cfg.dim, cfg.sigma)?;
            points.push((cfg, mix));
        }
    }
    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|g| (0..settings.replicates as u64).map(move |r| (g, r)))
        .collect();
    let counts = ctx.par_map(tasks, |(g, r)| dimension_replicate(&points[g].0, &points[g].1, r));
    points
        .iter()
        .zip(counts.chunks(settings.replicates))
        .map(|((cfg, mix), mine)| Ok(summarize_dimension(cfg, mix, mine)?))
        .collect()
}

pub fn run(settings: &DimSimSettings, ctx: &RunContext) -> Result<Vec<PathBuf>> {
    ctx.record("dim-sim", settings, |ctx| {
        let rows: Vec<Vec<String>> = simulate(settings, ctx)?
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.dim.to_string(),
                    num(r.sigma),
                    num(r.separation),
                    r.replicates.to_string(),
                    num(r.proportion_correct),
                    num(r.proportion_se),
                    num(r.bounds.lower),
                    num(r.bounds.upper),
                    u8::from(r.within_bounds).to_string(),
                ]
            })
            .collect();
        let path = ctx.path(OUTPUT);
        write_csv(&path, &HEADER, &rows)?;
        Ok(vec![path])
    })
}
