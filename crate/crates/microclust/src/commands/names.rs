use std::path::{Path, PathBuf};

use microclust_core::combinatorics::{expected_matches_bounds, match_pmf};
use microclust_core::names::{
    independence_join_with, names_report, FrequencyTable, DEFAULT_POOL_THRESHOLD,
};
use serde::{Deserialize, Serialize};

use super::{num, write_csv, RunContext};
use crate::error::{CliError, Result};
use crate::freq::{load_frequency_table, parse_frequency_table, TableFormat};
use crate::manifest::write_json;

pub const REPORT: &str = "names_report.json";
pub const GROUPS: &str = "names_groups.csv";
pub const HEADER: [&str; 6] = [
    "group_size",
    "multiplicity",
    "pmf_zero",
    "log_pmf_all",
    "bound_lower",
    "bound_upper",
];

const FIXTURE_FIRST: &str = include_str!("../../fixtures/first_names.csv");
const FIXTURE_LAST: &str = include_str!("../../fixtures/last_names.csv");
pub const FIXTURE_POPULATION: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NamesSettings {
    /// Use the bundled example tables instead of files.
    pub fixture: bool,
    pub first: Option<PathBuf>,
    pub last: Option<PathBuf>,
    pub first_format: TableFormat,
    pub last_format: TableFormat,
    /// People to distribute; defaults to the first table's total count.
    pub population: Option<u64>,
    pub t_grid: Vec<f64>,
    pub pool_threshold: f64,
}

impl Default for NamesSettings {
    fn default() -> Self {
        Self {
            fixture: false,
            first: None,
            last: None,
            first_format: TableFormat::default(),
            last_format: TableFormat::default(),
            population: None,
            t_grid: vec![0.005, 0.01, 0.05],
            pool_threshold: DEFAULT_POOL_THRESHOLD,
        }
    }
}

fn fixture_table(text: &str, label: &str) -> Result<FrequencyTable> {
    let path = PathBuf::from(format!("fixtures/{label}_names.csv"));
    parse_frequency_table(text.as_bytes(), &TableFormat::default(), &path)
}

fn load(path: &Option<PathBuf>, format: &TableFormat, which: &str) -> Result<FrequencyTable> {
    let path: &Path = path
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing --{which} (or pass --fixture)")))?;
    load_frequency_table(path, format)
}

#[derive(Debug, Clone, Serialize)]
struct ReportFile<'a> {
    population: u64,
    #[serde(flatten)]
    report: &'a microclust_core::names::NamesReport,
}

pub fn run(settings: &NamesSettings, ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let (first, last) = if settings.fixture {
        (
            fixture_table(FIXTURE_FIRST, "first")?,
            fixture_table(FIXTURE_LAST, "last")?,
        )
    } else {
        (
            load(&settings.first, &settings.first_format, "first")?,
            load(&settings.last, &settings.last_format, "last")?,
        )
    };
    let population = match (settings.population, settings.fixture) {
        (Some(p), _) => p,
        (None, true) => FIXTURE_POPULATION,
        (None, false) => first.source_population.ok_or_else(|| {
            CliError::Usage("--population is required for proportion tables".into())
        })?,
    };
    let mut resolved = settings.clone();
    resolved.population = Some(population);
    ctx.record("names", &resolved, |ctx| {
        let hist = independence_join_with(&first, &last, population, settings.pool_threshold)?;
        let report = names_report(&hist, &settings.t_grid)?;
        let report_path = ctx.path(REPORT);
        write_json(
            &report_path,
            &ReportFile {
                population,
                report: &report,
            },
        )?;
        let mut rows = Vec::new();
        for &(size, mult) in hist.runs() {
            let pmf = match_pmf(size)?;
            let bounds = expected_matches_bounds(size)?;
            let log_all = -microclust_core::special::ln_factorial(size);
            rows.push(vec![
                size.to_string(),
                mult.to_string(),
                num(pmf.pmf[0]),
                num(log_all),
                num(bounds.lower),
                num(bounds.upper),
            ]);
        }
        let groups_path = ctx.path(GROUPS);
        write_csv(&groups_path, &HEADER, &rows)?;
        Ok(vec![report_path, groups_path])
    })
}
