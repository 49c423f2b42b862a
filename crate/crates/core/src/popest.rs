//! Closed-population estimation from overlapping lists.
//!
//! Capture patterns are bitmasks: bit `j` set means the entity appears on
//! list `j`. Tables are dense arrays of length `2^T` indexed by pattern, so
//! `counts[0]` is the unobserved cell.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assignment::{EquallySpacedMixture1D, ScaleConvention};
use crate::error::{Error, Result};
use crate::rng::{replicate_rng, Experiment};

/// Largest number of lists a table may have.
pub const MAX_LISTS: usize = 16;
pub const DEFAULT_MAX_ITER: usize = 10_000;
const TOLERANCE: f64 = 1e-8;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureTable {
    lists: usize,
    counts: Vec<u64>,
}

impl CaptureTable {
    pub fn new(lists: usize, counts: Vec<u64>) -> Result<Self> {
        check_lists(lists)?;
        if counts.len() != 1 << lists {
            return Err(Error::LengthMismatch {
                left: counts.len(),
                right: 1 << lists,
            });
        }
        Ok(Self { lists, counts })
    }

    pub fn zeros(lists: usize) -> Result<Self> {
        check_lists(lists)?;
        Ok(Self {
            lists,
            counts: vec![0; 1 << lists],
        })
    }

    pub fn lists(&self) -> usize {
        self.lists
    }

    pub fn count(&self, pattern: usize) -> u64 {
        self.counts[pattern]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn set(&mut self, pattern: usize, count: u64) {
        self.counts[pattern] = count;
    }

    /// `Σ_x n(x)`, including the unobserved cell.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `N_obs = Σ_{x≠0} n(x)`.
    pub fn observed_total(&self) -> u64 {
        self.counts[1..].iter().sum()
    }

    /// `M_j`, the number of entities on each list.
    pub fn list_sizes(&self) -> Vec<u64> {
        (0..self.lists)
            .map(|j| {
                self.counts
                    .iter()
                    .enumerate()
                    .filter(|(x, _)| x >> j & 1 == 1)
                    .map(|(_, &n)| n)
                    .sum()
            })
            .collect()
    }

    /// Same table with the unobserved cell cleared.
    pub fn observed(&self) -> Self {
        let mut t = self.clone();
        t.counts[0] = 0;
        t
    }

    /// Relabels lists so that old list `j` becomes list `perm[j]`.
    pub fn permute_lists(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.lists];
        if perm.len() != self.lists {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: self.lists,
            });
        }
        for &p in perm {
            if p >= self.lists || core::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid("perm", "not a permutation"));
            }
        }
        let mut out = vec![0; self.counts.len()];
        for (x, &n) in self.counts.iter().enumerate() {
            let y = (0..self.lists)
                .filter(|&j| x >> j & 1 == 1)
                .fold(0, |acc, j| acc | 1 << perm[j]);
            out[y] = n;
        }
        Ok(Self {
            lists: self.lists,
            counts: out,
        })
    }
}

fn check_lists(lists: usize) -> Result<()> {
    if lists == 0 || lists > MAX_LISTS {
        return Err(Error::invalid(
            "lists",
            alloc::format!("must be between 1 and {MAX_LISTS}"),
        ));
    }
    Ok(())
}

/// `π_x = Π_j p_j^{x_j} (1 − p_j)^{1 − x_j}` for every pattern.
pub fn pattern_probabilities(p: &[f64]) -> Vec<f64> {
    let mut probs = vec![1.0];
    for &pj in p {
        let mut next = vec![0.0; probs.len() * 2];
        for (x, &q) in probs.iter().enumerate() {
            next[x] = q * (1.0 - pj);
            next[x | probs.len()] = q * pj;
        }
        probs = next;
    }
    probs
}

/// Draws `n ~ Multinomial(entities, π)` for list probabilities `p`.
pub fn sample_capture_table<R: Rng + ?Sized>(
    entities: u64,
    p: &[f64],
    rng: &mut R,
) -> Result<CaptureTable> {
    check_lists(p.len())?;
    if p.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
        return Err(Error::invalid("p", "probabilities must lie in [0, 1]"));
    }
    let probs = pattern_probabilities(p);
    let mut counts = vec![0u64; probs.len()];
    let mut left = entities;
    let mut mass = 1.0;
    let last = probs.len() - 1;
    for (x, &q) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if x == last {
            counts[x] = left;
            break;
        }
        let share = if mass > 0.0 { (q / mass).clamp(0.0, 1.0) } else { 1.0 };
        let draw = Binomial::new(left, share)
            .map_err(|e| Error::invalid("p", e.to_string()))?
            .sample(rng);
        counts[x] = draw;
        left -= draw;
        mass -= q;
    }
    CaptureTable::new(p.len(), counts)
}

/// Draws `p_j ~ Beta(a, b)` for each list, then the capture table.
pub fn generate_capture_table<R: Rng + ?Sized>(
    entities: u64,
    lists: usize,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<(CaptureTable, Vec<f64>)> {
    if entities == 0 {
        return Err(Error::invalid("entities", "must be at least 1"));
    }
    if lists < 2 {
        return Err(Error::invalid("lists", "need at least two lists"));
    }
    let beta = Beta::new(a, b).map_err(|e| Error::invalid("a/b", e.to_string()))?;
    let p: Vec<f64> = (0..lists).map(|_| beta.sample(rng)).collect();
    let table = sample_capture_table(entities, &p, rng)?;
    Ok((table, p))
}

/// `b` such that `(b/(a+b))^T = target`, the expected unobserved fraction.
pub fn beta_b_for_target(a: f64, lists: usize, target: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid("a", "must be positive"));
    }
    if lists == 0 {
        return Err(Error::invalid("lists", "must be at least 1"));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid("target", "must lie strictly between 0 and 1"));
    }
    let r = libm::pow(target, 1.0 / lists as f64);
    Ok(a * r / (1.0 - r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub y: f64,
    /// Zero-based list index.
    pub list: usize,
    /// Zero-based entity index; its mean is `(entity + 1)/K`.
    pub entity: usize,
}

/// Turns a capture table into list records.
///
/// Patterns are visited in increasing order. For each entity counted in
/// `n(x)`, an entity is drawn without replacement from the remaining pool
/// and emits one record per list in `x`, with tags drawn without
/// replacement from those lists and values `y ~ N((k+1)/K, σ²)`.
pub fn generate_databases<R: Rng + ?Sized>(
    table: &CaptureTable,
    entities: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<SyntheticRecord>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma", "must be positive and finite"));
    }
    let total = table.total();
    if total > entities as u64 {
        return Err(Error::TooManyEntities {
            requested: total,
            available: entities as u64,
        });
    }
    let mut pool: Vec<usize> = (0..entities).collect();
    let mut records = Vec::new();
    let k = entities as f64;
    for (x, &n) in table.counts().iter().enumerate() {
        let mut tags: Vec<usize> = (0..table.lists()).filter(|&j| x >> j & 1 == 1).collect();
        for _ in 0..n {
            let pick = rng.random_range(0..pool.len());
            let entity = pool.swap_remove(pick);
            tags.shuffle(rng);
            for &list in &tags {
                let eps: f64 = rng.sample(StandardNormal);
                records.push(SyntheticRecord {
                    y: (entity as f64 + 1.0) / k + sigma * eps,
                    list,
                    entity,
                });
            }
        }
    }
    Ok(records)
}

/// Estimated intersection counts: `n̂(x)` is the number of clusters whose
/// lists, pooled over their records, form pattern `x`. The zero cell is
/// left at 0.
pub fn reconstruct_counts(
    records: &[SyntheticRecord],
    assignments: &[usize],
    lists: usize,
) -> Result<CaptureTable> {
    if records.len() != assignments.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: assignments.len(),
        });
    }
    let mut table = CaptureTable::zeros(lists)?;
    let mut patterns: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, (r, &cluster)) in records.iter().zip(assignments).enumerate() {
        if r.list >= lists {
            return Err(Error::InvalidEntry {
                row: i,
                reason: alloc::format!("list {} outside 0..{lists}", r.list),
            });
        }
        *patterns.entry(cluster).or_default() |= 1 << r.list;
    }
    for x in patterns.into_values() {
        table.counts[x] += 1;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    /// `[n̂₀/C, n̂₀·C]` with `C = exp(z·√ln(1 + Var/n̂₀²))`.
    #[default]
    LogNormal,
    /// `n̂₀ ± z·√Var`, truncated at 0.
    Wald,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateStatus {
    Finite,
    /// No entity was seen on two lists, so the likelihood increases without
    /// bound in `N`.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub interval: IntervalMethod,
    pub max_iter: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            interval: IntervalMethod::default(),
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopEstimate {
    pub n0_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_obs: u64,
    /// `N̂ = N_obs + n̂₀`.
    pub total_hat: f64,
    /// Detection probability per list; 0 for dropped lists.
    pub p_hat: Vec<f64>,
    /// Lists with nobody on them, left out of the fit.
    pub dropped_lists: Vec<usize>,
    pub variance: f64,
    pub iterations: usize,
    pub status: EstimateStatus,
}

/// Independence-model maximum likelihood estimate of the unobserved count.
///
/// Solves `N = N_obs / (1 − Π_j(1 − M_j/N))` by fixed-point iteration from
/// `N_obs / (1 − Π_j(1 − M_j/N_obs))`. The iteration increases monotonically
/// to the smallest root. The variance is the inverse of the observed
/// information of the profile likelihood in `N`,
/// `1/(N−N_obs) − 1/N − Σ_j [1/(N−M_j) − 1/N]`.
pub fn estimate_population(observed: &CaptureTable) -> Result<PopEstimate> {
    estimate_population_with(observed, &EstimateOptions::default())
}

pub fn estimate_population_with(
    observed: &CaptureTable,
    options: &EstimateOptions,
) -> Result<PopEstimate> {
    if observed.lists() < 2 {
        return Err(Error::invalid("lists", "need at least two lists"));
    }
    let n_obs = observed.observed_total();
    if n_obs == 0 {
        return Err(Error::Empty("observed capture counts"));
    }
    let sizes = observed.list_sizes();
    let dropped_lists: Vec<usize> = (0..sizes.len()).filter(|&j| sizes[j] == 0).collect();
    let kept: Vec<f64> = sizes.iter().filter(|&&m| m > 0).map(|&m| m as f64).collect();
    if kept.len() < 2 {
        return Err(Error::Degenerate(
            "fewer than two lists have any entities".to_string(),
        ));
    }
    let obs = n_obs as f64;
    let step = |n: f64| obs / (1.0 - kept.iter().map(|m| 1.0 - m / n).product::<f64>());

    if kept.iter().sum::<f64>() == obs {
        return Ok(PopEstimate {
            n0_hat: f64::INFINITY,
            ci_lower: 0.0,
            ci_upper: f64::INFINITY,
            n_obs,
            total_hat: f64::INFINITY,
            p_hat: vec![0.0; sizes.len()],
            dropped_lists,
            variance: f64::INFINITY,
            iterations: 0,
            status: EstimateStatus::Unbounded,
        });
    }

    let mut n = step(obs);
    let mut iterations = 1;
    loop {
        if iterations >= options.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                last: n,
            });
        }
        let next = step(n);
        iterations += 1;
        let delta = next - n;
        n = next;
        if !n.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                last: n,
            });
        }
        if delta.abs() < TOLERANCE {
            break;
        }
    }
    let n0 = (n - obs).max(0.0);
    let p_hat = sizes.iter().map(|&m| m as f64 / n).collect();

    let (variance, ci_lower, ci_upper) = if n0 == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let info = 1.0 / n0 - 1.0 / n - kept.iter().map(|m| 1.0 / (n - m) - 1.0 / n).sum::<f64>();
        if !(info > 0.0) {
            return Err(Error::Degenerate(alloc::format!(
                "observed information {info} is not positive"
            )));
        }
        let var = 1.0 / info;
        let (lo, hi) = match options.interval {
            IntervalMethod::LogNormal => {
                let c = libm::exp(Z_95 * libm::sqrt(libm::log1p(var / (n0 * n0))));
                (n0 / c, n0 * c)
            }
            IntervalMethod::Wald => {
                let half = Z_95 * libm::sqrt(var);
                ((n0 - half).max(0.0), n0 + half)
            }
        };
        (var, lo, hi)
    };
    Ok(PopEstimate {
        n0_hat: n0,
        ci_lower,
        ci_upper,
        n_obs,
        total_hat: obs + n0,
        p_hat,
        dropped_lists,
        variance,
        iterations,
        status: EstimateStatus::Finite,
    })
}

/// What a replicate's interval for `n̂(0)` is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageTarget {
    /// `K − N̂_obs`: entities not represented by any estimated cluster, so
    /// the interval covers exactly when `N̂_obs + [lo, hi]` contains `K`.
    #[default]
    Population,
    /// The generated `n(0…0)` cell. Coincides with `Population` when the
    /// clustering is perfect.
    TableCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopestSimConfig {
    /// `K`
    pub entities: usize,
    /// `T`
    pub lists: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub scale: ScaleConvention,
    #[serde(default)]
    pub estimate: EstimateOptions,
    #[serde(default)]
    pub target: CoverageTarget,
}

impl PopestSimConfig {
    pub fn new(entities: usize, lists: usize, a: f64, b: f64, c: f64, replicates: usize, seed: u64) -> Self {
        Self {
            entities,
            lists,
            a,
            b,
            c,
            replicates,
            seed,
            scale: ScaleConvention::default(),
            estimate: EstimateOptions::default(),
            target: CoverageTarget::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entities < 2 {
            return Err(Error::invalid("entities", "need at least two entities"));
        }
        if self.lists < 2 || self.lists > MAX_LISTS {
            return Err(Error::invalid(
                "lists",
                alloc::format!("must be between 2 and {MAX_LISTS}"),
            ));
        }
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        if self.estimate.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.scale.sigma(self.c, self.entities)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub prop_correct: f64,
    /// Value the interval is scored against, per [`CoverageTarget`].
    pub n0_true: u64,
    /// The generated unobserved cell `n(0…0)`.
    pub n0_cell: u64,
    /// Clusters holding at least one record, `N̂_obs`.
    pub n_obs_hat: u64,
    /// `None` when the estimator failed; the fields below are then NaN.
    pub covered: Option<bool>,
    pub n0_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub sq_error_n0: f64,
    /// Mean over `x ≠ 0` of `(n̂(x) − n(x))²`.
    pub mse_nx: f64,
    pub failure: Option<String>,
}

/// One pass of the pipeline: table, records, nearest-mean assignment,
/// reconstructed counts, estimate. Estimator failures are recorded in the
/// outcome; invalid configurations are errors.
pub fn popest_replicate(config: &PopestSimConfig, replicate: u64) -> Result<ReplicateOutcome> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, Experiment::Popest, config.c.to_bits(), replicate);
    let (table, _) = generate_capture_table(
        config.entities as u64,
        config.lists,
        config.a,
        config.b,
        &mut rng,
    )?;
    let sigma = config.sigma();
    let records = generate_databases(&table, config.entities, sigma, &mut rng)?;
    let mix = EquallySpacedMixture1D::unit_interval(config.entities, sigma)?;
    let assignments: Vec<usize> = records.iter().map(|r| mix.assign(r.y)).collect();
    let correct = records
        .iter()
        .zip(&assignments)
        .filter(|(r, &k)| r.entity == k)
        .count();
    let prop_correct = if records.is_empty() {
        f64::NAN
    } else {
        correct as f64 / records.len() as f64
    };
    let rebuilt = reconstruct_counts(&records, &assignments, config.lists)?;
    let cells = table.counts().len() - 1;
    let mse_nx = (1..table.counts().len())
        .map(|x| {
            let d = rebuilt.count(x) as f64 - table.count(x) as f64;
            d * d
        })
        .sum::<f64>()
        / cells as f64;
    let n0_cell = table.count(0);
    let n_obs_hat = rebuilt.observed_total();
    let n0_true = match config.target {
        CoverageTarget::Population => config.entities as u64 - n_obs_hat,
        CoverageTarget::TableCell => n0_cell,
    };
    let outcome = match estimate_population_with(&rebuilt, &config.estimate) {
        Ok(est) => {
            let truth = n0_true as f64;
            ReplicateOutcome {
                replicate,
                prop_correct,
                n0_true,
                n0_cell,
                n_obs_hat,
                covered: Some(est.ci_lower <= truth && truth <= est.ci_upper),
                n0_hat: est.n0_hat,
                ci_lo: est.ci_lower,
                ci_hi: est.ci_upper,
                sq_error_n0: (est.n0_hat - truth) * (est.n0_hat - truth),
                mse_nx,
                failure: None,
            }
        }
        Err(e) => ReplicateOutcome {
            replicate,
            prop_correct,
            n0_true,
            n0_cell,
            n_obs_hat,
            covered: None,
            n0_hat: f64::NAN,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            sq_error_n0: f64::NAN,
            mse_nx,
            failure: Some(e.to_string()),
        },
    };
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopestSummary {
    pub c: f64,
    pub replicates: usize,
    pub failed: usize,
    pub prop_correct_mean: f64,
    /// Share of successful replicates whose interval covers `n(0)`.
    pub coverage: f64,
    pub mse_n0: f64,
    pub mse_nx: f64,
}

/// Aggregates outcomes; the result does not depend on their order.
pub fn summarize_popest(c: f64, outcomes: &[ReplicateOutcome]) -> Result<PopestSummary> {
    if outcomes.is_empty() {
        return Err(Error::Empty("replicate outcomes"));
    }
    let mut sorted: Vec<&ReplicateOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.replicate);
    let ok: Vec<&&ReplicateOutcome> = sorted.iter().filter(|o| o.covered.is_some()).collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut n) = (0.0, 0usize);
        for x in xs {
            s += x;
            n += 1;
        }
        if n == 0 {
            f64::NAN
        } else {
            s / n as f64
        }
    };
    Ok(PopestSummary {
        c,
        replicates: outcomes.len(),
        failed: outcomes.len() - ok.len(),
        prop_correct_mean: mean(&mut sorted.iter().map(|o| o.prop_correct)),
        coverage: mean(&mut ok.iter().map(|o| f64::from(u8::from(o.covered == Some(true))))),
        mse_n0: mean(&mut ok.iter().map(|o| o.sq_error_n0)),
        mse_nx: mean(&mut sorted.iter().map(|o| o.mse_nx)),
    })
}

pub fn run_popest_sim(config: &PopestSimConfig) -> Result<Vec<ReplicateOutcome>> {
    config.validate()?;
    (0..config.replicates as u64)
        .map(|r| popest_replicate(config, r))
        .collect()
}
