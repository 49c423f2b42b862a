//! Name-frequency tables and the joint first × last name histogram.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    ln_hoeffding_tail, name_entropy, prob_all_correct, NameHistogram,
};
use crate::error::{Error, Result};

/// Name given to the synthesized entry holding mass missing from a truncated
/// table.
pub const REMAINDER_NAME: &str = "OTHER";

/// Cells whose expected size falls below this are treated as uniquely named
/// individuals.
pub const DEFAULT_POOL_THRESHOLD: f64 = 0.5;

/// Proportion slack tolerated before a table is rejected as over-full.
const OVERFULL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameFrequency {
    pub name: String,
    pub proportion: f64,
    /// Set on the synthesized remainder entry, which stands for many rare
    /// names rather than one.
    #[serde(default)]
    pub remainder: bool,
}

/// Marginal distribution of one name component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    entries: Vec<NameFrequency>,
    pub source_population: Option<u64>,
}

impl FrequencyTable {
    /// Builds a table from raw counts.
    ///
    /// Proportions are `count / population` when `population` is given (a
    /// truncated table then gets a remainder entry), else `count / Σ count`.
    /// Zero counts are dropped.
    pub fn from_counts(rows: Vec<(String, f64)>, population: Option<u64>) -> Result<Self> {
        for (row, (_, count)) in rows.iter().enumerate() {
            if !count.is_finite() || *count < 0.0 {
                return Err(Error::InvalidEntry {
                    row,
                    reason: alloc::format!("count must be a non-negative number, got {count}"),
                });
            }
        }
        let total: f64 = rows.iter().map(|(_, c)| c).sum();
        let denom = match population {
            Some(0) => return Err(Error::invalid("population", "must be positive")),
            Some(p) => {
                if total > p as f64 * (1.0 + OVERFULL_TOLERANCE) {
                    return Err(Error::invalid(
                        "population",
                        alloc::format!("counts sum to {total}, more than the population {p}"),
                    ));
                }
                p as f64
            }
            None => total,
        };
        if !(denom > 0.0) {
            return Err(Error::Empty("frequency table"));
        }
        let rows = rows.into_iter().map(|(n, c)| (n, c / denom)).collect();
        let mut table = Self::from_proportions(rows)?;
        table.source_population = population.or(Some(libm::round(total) as u64));
        Ok(table)
    }

    /// Builds a table from proportions in `(0, 1]`; zero rows are dropped.
    ///
    /// If the proportions sum below one, a [`REMAINDER_NAME`] entry carries
    /// the difference.
    pub fn from_proportions(rows: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::with_capacity(rows.len() + 1);
        for (row, (name, p)) in rows.into_iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidEntry {
                    row,
                    reason: alloc::format!("proportion must lie in [0, 1], got {p}"),
                });
            }
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateName(name));
            }
            if p > 0.0 {
                entries.push(NameFrequency {
                    name,
                    proportion: p,
                    remainder: false,
                });
            }
        }
        if entries.is_empty() {
            return Err(Error::Empty("frequency table"));
        }
        let total: f64 = entries.iter().map(|e| e.proportion).sum();
        if total > 1.0 + OVERFULL_TOLERANCE {
            return Err(Error::invalid(
                "proportions",
                alloc::format!("sum to {total}, more than one"),
            ));
        }
        if total > 1.0 {
            for e in &mut entries {
                e.proportion /= total;
            }
        } else if 1.0 - total > 1e-12 {
            if seen.contains(REMAINDER_NAME) {
                return Err(Error::DuplicateName(REMAINDER_NAME.into()));
            }
            entries.push(NameFrequency {
                name: REMAINDER_NAME.into(),
                proportion: 1.0 - total,
                remainder: true,
            });
        }
        Ok(Self {
            entries,
            source_population: None,
        })
    }

    pub fn entries(&self) -> &[NameFrequency] {
        &self.entries
    }

    pub fn proportion(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.proportion)
    }

    /// Named (non-remainder) proportions, largest first, ties by name.
    fn sorted_named(&self) -> Vec<f64> {
        let mut named: Vec<&NameFrequency> = self.entries.iter().filter(|e| !e.remainder).collect();
        named.sort_by(|a, b| {
            b.proportion
                .partial_cmp(&a.proportion)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.name.cmp(&b.name))
        });
        named.into_iter().map(|e| e.proportion).collect()
    }
}

/// [`independence_join_with`] at the default pooling threshold.
pub fn independence_join(
    first: &FrequencyTable,
    last: &FrequencyTable,
    population: u64,
) -> Result<NameHistogram> {
    independence_join_with(first, last, population, DEFAULT_POOL_THRESHOLD)
}

/// Joint name histogram for `population` people choosing first and last
/// names independently.
///
/// Each named cell `(f, l)` expects `population · p_f · p_l` people. Cells
/// expecting fewer than `pool_threshold`, and every cell touching a
/// remainder entry, are pooled and split into singleton groups. Expected
/// sizes are rounded to integers by the largest-remainder rule so the group
/// sizes sum to `population` exactly.
pub fn independence_join_with(
    first: &FrequencyTable,
    last: &FrequencyTable,
    population: u64,
    pool_threshold: f64,
) -> Result<NameHistogram> {
    if population == 0 {
        return Err(Error::invalid("population", "must be positive"));
    }
    if !(pool_threshold >= 0.0) {
        return Err(Error::invalid("pool_threshold", "must be non-negative"));
    }
    let pop = population as f64;
    let firsts = first.sorted_named();
    let lasts = last.sorted_named();

    let mut expected: Vec<f64> = Vec::new();
    for &pf in &firsts {
        let scale = pop * pf;
        if scale * lasts.first().copied().unwrap_or(0.0) < pool_threshold {
            break;
        }
        for &pl in &lasts {
            let e = scale * pl;
            if e < pool_threshold {
                break;
            }
            expected.push(e);
        }
    }
    // Sorting fixes the summation order, so the result depends only on the
    // multiset of cell expectations and not on which table is "first".
    expected.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let pooled = (pop - neumaier_sum(&expected)).max(0.0);

    struct Slot {
        expected: f64,
        size: u64,
        frac: f64,
        pool: bool,
    }
    let mut slots: Vec<Slot> = expected
        .iter()
        .map(|&e| Slot {
            expected: e,
            size: libm::floor(e) as u64,
            frac: e - libm::floor(e),
            pool: false,
        })
        .collect();
    slots.push(Slot {
        expected: pooled,
        size: libm::floor(pooled) as u64,
        frac: pooled - libm::floor(pooled),
        pool: true,
    });
    let assigned: u64 = slots.iter().map(|s| s.size).sum();
    if assigned > population {
        // Only reachable through rounding at the last ulp; shave the pool.
        let excess = assigned - population;
        let pool = slots.last_mut().expect("pool slot");
        pool.size = pool.size.saturating_sub(excess);
    } else {
        let mut leftover = (population - assigned) as usize;
        let mut order: Vec<usize> = (0..slots.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&slots[a], &slots[b]);
            sb.frac
                .partial_cmp(&sa.frac)
                .unwrap_or(Ordering::Equal)
                .then(sb.expected.partial_cmp(&sa.expected).unwrap_or(Ordering::Equal))
                .then(sa.pool.cmp(&sb.pool))
        });
        for &i in order.iter().cycle() {
            if leftover == 0 {
                break;
            }
            slots[i].size += 1;
            leftover -= 1;
        }
    }

    let singletons = slots.last().map_or(0, |s| s.size);
    let runs = slots[..slots.len() - 1]
        .iter()
        .map(|s| (s.size, 1))
        .filter(|&(size, _)| size > 0)
        .chain(core::iter::once((1, singletons)));
    NameHistogram::from_runs(runs)
}

fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingPoint {
    pub t: f64,
    pub bound: f64,
    /// Natural log of the bound, which stays finite after `bound` underflows.
    pub ln_bound: f64,
}

/// Summary of the identical-name analysis for one histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamesReport {
    pub expected_proportion_correct: f64,
    pub entropy_nats: f64,
    pub log_prob_all_correct: f64,
    pub hoeffding_bounds: Vec<HoeffdingPoint>,
    pub n_over_sum_sq: f64,
    pub total_records: u64,
    pub unique_names: u64,
}

pub fn names_report(hist: &NameHistogram, t_grid: &[f64]) -> Result<NamesReport> {
    let hoeffding_bounds = t_grid
        .iter()
        .map(|&t| {
            let ln_bound = ln_hoeffding_tail(hist, t)?;
            Ok(HoeffdingPoint {
                t,
                bound: libm::exp(ln_bound),
                ln_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NamesReport {
        expected_proportion_correct: hist.expected_proportion_correct(),
        entropy_nats: name_entropy(hist),
        log_prob_all_correct: prob_all_correct(hist),
        hoeffding_bounds,
        n_over_sum_sq: hist.concentration_ratio(),
        total_records: hist.total_records(),
        unique_names: hist.unique_names(),
    })
}
