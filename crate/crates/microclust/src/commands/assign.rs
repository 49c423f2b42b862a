use std::path::PathBuf;

use microclust_core::assignment::{
    assignment_replicate, summarize_assignment, AssignmentSimConfig, AssignmentSimResult,
    Boundary, ScaleConvention,
};
use serde::{Deserialize, Serialize};

use super::{num, write_csv, RunContext};
use crate::error::Result;
use crate::grid::GridSetting;

pub const OUTPUT: &str = "assign_sim.csv";
pub const HEADER: [&str; 7] = [
    "c",
    "N",
    "replicates",
    "prop_correct",
    "prop_se",
    "zero_correct_freq",
    "theory",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignSimSettings {
    pub n: usize,
    pub c_grid: GridSetting,
    pub replicates: usize,
    pub scale: ScaleConvention,
    pub boundary: Boundary,
}

impl Default for AssignSimSettings {
    fn default() -> Self {
        Self {
            n: 5000,
            c_grid: GridSetting::Spec("0.1:2:0.1".into()),
            replicates: 50,
            scale: ScaleConvention::Sigma,
            boundary: Boundary::Finite,
        }
    }
}

/// One result per grid point, replicates spread over the pool.
pub fn simulate(settings: &AssignSimSettings, ctx: &RunContext) -> Result<Vec<AssignmentSimResult>> {
    let configs = settings
        .c_grid
        .resolve()?
        .into_iter()
        .map(|c| {
            let mut cfg = AssignmentSimConfig::new(settings.n, c, settings.replicates, ctx.seed);
            cfg.scale = settings.scale;
            cfg.boundary = settings.boundary;
            cfg.validate().map(|()| cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tasks: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|g| (0..settings.replicates as u64).map(move |r| (g, r)))
        .collect();
    let counts = ctx.par_map(tasks, |(g, r)| assignment_replicate(&configs[g], r));
    let mut counts = counts.into_iter();
    configs
        .iter()
        .map(|cfg| {
            let mine = counts
                .by_ref()
                .take(settings.replicates)
                .collect::<Result<Vec<_>, _>>()?;
            Ok(summarize_assignment(cfg, mine)?)
        })
        .collect()
}

pub fn run(settings: &AssignSimSettings, ctx: &RunContext) -> Result<Vec<PathBuf>> {
    ctx.record("assign-sim", settings, |ctx| {
        let rows: Vec<Vec<String>> = simulate(settings, ctx)?
            .iter()
            .map(|r| {
                vec![
                    num(r.c),
                    r.n.to_string(),
                    r.replicates.to_string(),
                    num(r.proportion_correct_mean),
                    num(r.proportion_correct_se),
                    num(r.zero_correct_frequency),
                    num(r.theory_proportion),
                ]
            })
            .collect();
        let path = ctx.path(OUTPUT);
        write_csv(&path, &HEADER, &rows)?;
        Ok(vec![path])
    })
}
