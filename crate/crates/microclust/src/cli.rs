//! Argument parsing and dispatch. Flags override values from `--config`,
//! which override built-in defaults.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use microclust_core::assignment::{Boundary, ScaleConvention};
use microclust_core::bayes::{Initialization, ScanOrder};
use microclust_core::popest::{CoverageTarget, IntervalMethod};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::commands::assign::AssignSimSettings;
use crate::commands::bayes::BayesSimSettings;
use crate::commands::dim::DimSimSettings;
use crate::commands::names::NamesSettings;
use crate::commands::popest::PopestSimSettings;
use crate::commands::theory::{ChiSquareQuery, InfeasibilityQuery, TheorySettings};
use crate::commands::{self, RunContext};
use crate::error::{CliError, Result, EXIT_USAGE};
use crate::freq::ValueKind;
use crate::grid::{parse_grid, GridSetting};

pub const DEFAULT_SEED: u64 = 1;

/// Parses a kebab-case enum value through its serde representation.
fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Whole numbers given in grid syntax, e.g. `1:30:1` or `3,5,11`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntList(pub Vec<u64>);

fn parse_int_list(s: &str) -> std::result::Result<IntList, String> {
    let points = parse_grid(s).map_err(|e| e.to_string())?;
    points
        .iter()
        .map(|&x| {
            if x.fract() == 0.0 {
                Ok(x as u64)
            } else {
                Err(format!("{x} is not a whole number"))
            }
        })
        .collect::<std::result::Result<_, _>>()
        .map(IntList)
}

#[derive(Debug, Parser)]
#[command(name = "microclust", version, about = "Simulations of the limits of microclustering entity resolution")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// TOML file with defaults for any subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Identical-name analysis of a first × last name table.
    Names(NamesArgs),
    /// One-dimensional assignment accuracy over a grid of c.
    AssignSim(AssignArgs),
    /// Assignment accuracy on a lattice of means in p dimensions.
    DimSim(DimArgs),
    /// Collapsed Gibbs sampling and adjacency loss over a grid of c.
    BayesSim(BayesArgs),
    /// Population estimation after nearest-mean entity resolution.
    PopestSim(PopestArgs),
    /// Closed-form bounds without simulation.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct NamesArgs {
    /// Use the bundled example tables.
    #[arg(long)]
    pub fixture: bool,
    #[arg(long)]
    pub first: Option<PathBuf>,
    #[arg(long)]
    pub last: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<u64>,
    /// Comma list of deviations for the concentration bound.
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub pool_threshold: Option<f64>,
    /// Field delimiter for both tables.
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Tables have no header row; columns are then zero-based indices.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub name_column: Option<String>,
    #[arg(long)]
    pub value_column: Option<String>,
    /// counts or proportions
    #[arg(long, value_parser = parse_enum::<ValueKind>)]
    pub first_kind: Option<ValueKind>,
    #[arg(long, value_parser = parse_enum::<ValueKind>)]
    pub last_kind: Option<ValueKind>,
    /// Population behind a truncated first-name count table.
    #[arg(long)]
    pub first_population: Option<u64>,
    #[arg(long)]
    pub last_population: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// start:stop:step or comma list.
    #[arg(long)]
    pub c_grid: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// sigma (σ = c/N) or sigma-squared (σ² = c/N)
    #[arg(long, value_parser = parse_enum::<ScaleConvention>)]
    pub scale: Option<ScaleConvention>,
    /// finite or unbounded
    #[arg(long, value_parser = parse_enum::<Boundary>)]
    pub boundary: Option<Boundary>,
}

#[derive(Debug, Args)]
pub struct DimArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Dimensions, as a comma list or range.
    #[arg(long, value_parser = parse_int_list)]
    pub p_grid: Option<IntList>,
    #[arg(long)]
    pub sigma_grid: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BayesArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub c_grid: Option<String>,
    /// Retained sweeps per chain.
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Prior variance of the component means.
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long, value_parser = parse_enum::<ScaleConvention>)]
    pub scale: Option<ScaleConvention>,
    /// sequential or random
    #[arg(long, value_parser = parse_enum::<ScanOrder>)]
    pub scan: Option<ScanOrder>,
    /// prior or singletons
    #[arg(long, value_parser = parse_enum::<Initialization>)]
    pub init: Option<Initialization>,
}

#[derive(Debug, Args)]
pub struct PopestArgs {
    /// Entities.
    #[arg(long)]
    pub k: Option<usize>,
    /// Lists.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, conflicts_with = "target_n0_frac")]
    pub b: Option<f64>,
    /// Expected unobserved fraction; solves for b.
    #[arg(long)]
    pub target_n0_frac: Option<f64>,
    #[arg(long)]
    pub c_grid: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, value_parser = parse_enum::<ScaleConvention>)]
    pub scale: Option<ScaleConvention>,
    /// log-normal or wald
    #[arg(long, value_parser = parse_enum::<IntervalMethod>)]
    pub interval: Option<IntervalMethod>,
    /// population or table-cell
    #[arg(long, value_parser = parse_enum::<CoverageTarget>)]
    pub coverage_target: Option<CoverageTarget>,
    /// Iteration cap for the estimator.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Expected-match bounds for the group sizes in --nm.
    #[arg(long, requires = "nm")]
    pub derange: bool,
    #[arg(long, value_parser = parse_int_list)]
    pub nm: Option<IntList>,
    /// Concentration and zero-correct bounds for the 1-D mixture.
    #[arg(long, requires_all = ["sigma", "n", "t"])]
    pub infeasibility: bool,
    #[arg(long, default_value_t = 1.0)]
    pub ell: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Chi-square sandwich for a lattice with separation --delta.
    #[arg(long, requires_all = ["p", "delta", "sigma"])]
    pub chisq: bool,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub names: NamesSettings,
    pub assign_sim: AssignSimSettings,
    pub dim_sim: DimSimSettings,
    pub bayes_sim: BayesSimSettings,
    pub popest_sim: PopestSimSettings,
    pub theory: TheorySettings,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::data(path, e.to_string()))
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn grid(slot: &mut GridSetting, value: Option<String>) {
    if let Some(v) = value {
        *slot = GridSetting::Spec(v);
    }
}

impl NamesArgs {
    fn apply(self, s: &mut NamesSettings) {
        s.fixture |= self.fixture;
        if self.first.is_some() {
            s.first = self.first;
        }
        if self.last.is_some() {
            s.last = self.last;
        }
        if self.population.is_some() {
            s.population = self.population;
        }
        set(&mut s.t_grid, self.t_grid);
        set(&mut s.pool_threshold, self.pool_threshold);
        for f in [&mut s.first_format, &mut s.last_format] {
            set(&mut f.delimiter, self.delimiter);
            if self.no_header {
                f.has_header = false;
            }
            set(&mut f.name_column, self.name_column.clone());
            set(&mut f.value_column, self.value_column.clone());
        }
        set(&mut s.first_format.kind, self.first_kind);
        set(&mut s.last_format.kind, self.last_kind);
        if self.first_population.is_some() {
            s.first_format.population = self.first_population;
        }
        if self.last_population.is_some() {
            s.last_format.population = self.last_population;
        }
    }
}

impl AssignArgs {
    fn apply(self, s: &mut AssignSimSettings) {
        set(&mut s.n, self.n);
        grid(&mut s.c_grid, self.c_grid);
        set(&mut s.replicates, self.replicates);
        set(&mut s.scale, self.scale);
        set(&mut s.boundary, self.boundary);
    }
}

impl DimArgs {
    fn apply(self, s: &mut DimSimSettings) {
        set(&mut s.n, self.n);
        set(
            &mut s.p_grid,
            self.p_grid.map(|v| v.0.into_iter().map(|p| p as usize).collect()),
        );
        grid(&mut s.sigma_grid, self.sigma_grid);
        set(&mut s.replicates, self.replicates);
    }
}

impl BayesArgs {
    fn apply(self, s: &mut BayesSimSettings) {
        set(&mut s.n, self.n);
        grid(&mut s.c_grid, self.c_grid);
        set(&mut s.sweeps, self.sweeps);
        set(&mut s.burn_in, self.burn_in);
        set(&mut s.tau2, self.tau2);
        set(&mut s.scale, self.scale);
        set(&mut s.scan, self.scan);
        set(&mut s.init, self.init);
    }
}

impl PopestArgs {
    fn apply(self, s: &mut PopestSimSettings) {
        set(&mut s.k, self.k);
        set(&mut s.t, self.t);
        set(&mut s.a, self.a);
        if self.b.is_some() {
            s.b = self.b;
            s.target_n0_frac = None;
        }
        if self.target_n0_frac.is_some() {
            s.target_n0_frac = self.target_n0_frac;
            s.b = None;
        }
        grid(&mut s.c_grid, self.c_grid);
        set(&mut s.replicates, self.replicates);
        set(&mut s.scale, self.scale);
        set(&mut s.interval, self.interval);
        set(&mut s.coverage_target, self.coverage_target);
        set(&mut s.max_iter, self.max_iter);
    }
}

impl TheoryArgs {
    fn apply(self, s: &mut TheorySettings) -> Result<()> {
        let missing = |what: &str| CliError::Usage(format!("missing --{what}"));
        if self.derange {
            s.derange = self.nm.ok_or_else(|| missing("nm"))?.0;
        }
        if self.infeasibility {
            s.infeasibility = Some(InfeasibilityQuery {
                ell: self.ell,
                sigma: self.sigma.ok_or_else(|| missing("sigma"))?,
                n: self.n.ok_or_else(|| missing("n"))?,
                t: self.t.ok_or_else(|| missing("t"))?,
            });
        }
        if self.chisq {
            s.chisq = Some(ChiSquareQuery {
                p: self.p.ok_or_else(|| missing("p"))?,
                delta: self.delta.ok_or_else(|| missing("delta"))?,
                sigma: self.sigma.ok_or_else(|| missing("sigma"))?,
            });
        }
        Ok(())
    }
}

/// Executes a parsed command line and returns the files written.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let jobs = cli.jobs.or(file.jobs);
    let out_dir = cli
        .out_dir
        .or(file.out_dir.take())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = RunContext::new(seed, jobs, out_dir)?;
    match cli.command {
        Command::Names(a) => {
            a.apply(&mut file.names);
            commands::names::run(&file.names, &ctx)
        }
        Command::AssignSim(a) => {
            a.apply(&mut file.assign_sim);
            commands::assign::run(&file.assign_sim, &ctx)
        }
        Command::DimSim(a) => {
            a.apply(&mut file.dim_sim);
            commands::dim::run(&file.dim_sim, &ctx)
        }
        Command::BayesSim(a) => {
            a.apply(&mut file.bayes_sim);
            commands::bayes::run(&file.bayes_sim, &ctx)
        }
        Command::PopestSim(a) => {
            a.apply(&mut file.popest_sim);
            commands::popest::run(&file.popest_sim, &ctx)
        }
        Command::Theory(a) => {
            a.apply(&mut file.theory)?;
            commands::theory::run(&file.theory, &ctx)
        }
    }
}

/// Full program: parse, run, report. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
