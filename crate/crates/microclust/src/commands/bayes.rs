use std::path::PathBuf;

use microclust_core::assignment::ScaleConvention;
use microclust_core::bayes::{
    run_bayes_sim, BayesSimConfig, BayesSimResult, Initialization, ScanOrder, DEFAULT_TAU2,
};
use serde::{Deserialize, Serialize};

use super::{num, write_csv, RunContext};
use crate::error::Result;
use crate::grid::GridSetting;

pub const OUTPUT: &str = "bayes_sim.csv";
pub const HEADER: [&str; 3] = ["c", "sweep", "l0"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesSimSettings {
    pub n: usize,
    pub c_grid: GridSetting,
    pub sweeps: usize,
    pub burn_in: usize,
    pub tau2: f64,
    pub scale: ScaleConvention,
    pub scan: ScanOrder,
    pub init: Initialization,
}

impl Default for BayesSimSettings {
    fn default() -> Self {
        Self {
            n: 100,
            c_grid: GridSetting::Spec("0.1,0.25,0.5,1,2".into()),
            sweeps: 2000,
            burn_in: 500,
            tau2: DEFAULT_TAU2,
            scale: ScaleConvention::Sigma,
            scan: ScanOrder::Sequential,
            init: Initialization::Prior,
        }
    }
}

/// One chain per grid point; chains run concurrently.
pub fn simulate(settings: &BayesSimSettings, ctx: &RunContext) -> Result<Vec<BayesSimResult>> {
    let configs = settings
        .c_grid
        .resolve()?
        .into_iter()
        .map(|c| {
            let cfg = BayesSimConfig {
                scale: settings.scale,
                tau2: settings.tau2,
                scan: settings.scan,
                init: settings.init,
                ..BayesSimConfig::new(settings.n, c, settings.sweeps, settings.burn_in, ctx.seed)
            };
            cfg.validate().map(|()| cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ctx.par_map(configs, |cfg| run_bayes_sim(&cfg))
        .into_iter()
        .map(|r| Ok(r?))
        .collect()
}

pub fn run(settings: &BayesSimSettings, ctx: &RunContext) -> Result<Vec<PathBuf>> {
    ctx.record("bayes-sim", settings, |ctx| {
        let mut rows = Vec::new();
        for r in simulate(settings, ctx)? {
            for (sweep, l0) in r.l0.iter().enumerate() {
                rows.push(vec![num(r.c), sweep.to_string(), l0.to_string()]);
            }
        }
        let path = ctx.path(OUTPUT);
        write_csv(&path, &HEADER, &rows)?;
        Ok(vec![path])
    })
}
