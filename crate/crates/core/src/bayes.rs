//! Finite Gaussian mixture with known weights and variance and unknown means
//! `μ_k ~ N(0, τ²)`.
//!
//! Integrating the means out leaves a closed-form likelihood for each
//! labelling `z ∈ {0..K}^N`. That likelihood drives the Bayes factors
//! between configurations and the collapsed Gibbs sampler; the adjacency
//! loss compares sampled partitions with the truth.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::ScaleConvention;
use crate::error::{Error, Result};
use crate::rng::{replicate_rng, Experiment};
use crate::special::{ln_factorial, normal_ln_pdf};

/// Prior variance of the component means used by the simulation driver.
pub const DEFAULT_TAU2: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesMixtureModel {
    weights: Vec<f64>,
    sigma2: f64,
    tau2: f64,
}

impl BayesMixtureModel {
    pub fn new(weights: Vec<f64>, sigma2: f64, tau2: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("mixture weights"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights", "entries must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "weights",
                alloc::format!("must sum to one, got {total}"),
            ));
        }
        for (name, v) in [("sigma2", sigma2), ("tau2", tau2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        Ok(Self {
            weights,
            sigma2,
            tau2,
        })
    }

    pub fn uniform(k: usize, sigma2: f64, tau2: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("mixture weights"));
        }
        Self::new(vec![1.0 / k as f64; k], sigma2, tau2)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    fn check_label(&self, index: usize, label: usize) -> Result<()> {
        if label >= self.components() {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                k: self.components(),
            });
        }
        Ok(())
    }

    /// Log marginal likelihood of one cluster's data (`count`, `Σy`, `Σy²`)
    /// with its mean integrated out, without the weight term.
    fn ln_cluster_marginal(&self, count: usize, sum: f64, sum_sq: f64) -> f64 {
        let (s2, t2) = (self.sigma2, self.tau2);
        let n = count as f64;
        let denom = n * t2 + s2;
        0.5 * libm::log(s2) - n * 0.5 * libm::log(2.0 * PI * s2) - 0.5 * libm::log(denom)
            - sum_sq / (2.0 * s2)
            + t2 * sum * sum / (2.0 * s2 * denom)
    }

    /// Predictive log density of a new point joining a cluster holding
    /// `count` points with sum `sum`.
    fn ln_predictive(&self, y: f64, count: usize, sum: f64) -> f64 {
        let denom = count as f64 * self.tau2 + self.sigma2;
        let mean = self.tau2 * sum / denom;
        let var = self.tau2 * self.sigma2 / denom + self.sigma2;
        normal_ln_pdf(y, mean, var)
    }
}

/// `ln L(y, z | π, τ², σ²)` with the component means integrated out.
///
/// The multinomial coefficient `N!/Π N_k!` is added only when
/// `include_multinomial_coeff` is set; without it the value is the
/// likelihood of the labelled configuration, which is what the Gibbs
/// conditionals use.
pub fn log_config_likelihood(
    model: &BayesMixtureModel,
    y: &[f64],
    z: &[usize],
    include_multinomial_coeff: bool,
) -> Result<f64> {
    if y.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: z.len(),
        });
    }
    let k = model.components();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k];
    let mut sum_sqs = vec![0.0; k];
    for (i, (&yi, &zi)) in y.iter().zip(z).enumerate() {
        if !yi.is_finite() {
            return Err(Error::invalid("y", "data must be finite"));
        }
        model.check_label(i, zi)?;
        counts[zi] += 1;
        sums[zi] += yi;
        sum_sqs[zi] += yi * yi;
    }
    let mut total = 0.0;
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        total += counts[c] as f64 * libm::log(model.weights[c])
            + model.ln_cluster_marginal(counts[c], sums[c], sum_sqs[c]);
    }
    if include_multinomial_coeff {
        total += ln_factorial(y.len() as u64)
            - counts.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>();
    }
    Ok(total)
}

fn check_distinct(j: usize, k: usize, model: &BayesMixtureModel) -> Result<()> {
    model.check_label(0, j)?;
    model.check_label(1, k)?;
    if j == k {
        return Err(Error::invalid("j", "must differ from k"));
    }
    Ok(())
}

/// Closed-form Bayes factor between two configurations that differ only in
/// whether `y_i` and `y_i2` share a cluster:
///
/// `(2π_j/π_k) · σ√(2τ²+σ²)/(τ²+σ²) · exp[(τ²/(2σ²)){(y_i²+y_i2²)/(τ²+σ²) − (y_i+y_i2)²/(2τ²+σ²)}]`.
///
/// This equals `L(z)/L(z*)` where `z` keeps the two points as singletons in
/// clusters `j` and `k`, `z*` puts both in `k`, and both likelihoods include
/// the multinomial coefficient.
pub fn bayes_factor_merge(
    model: &BayesMixtureModel,
    y_i: f64,
    y_i2: f64,
    j: usize,
    k: usize,
) -> Result<f64> {
    check_distinct(j, k, model)?;
    let (s2, t2) = (model.sigma2, model.tau2);
    let prefactor = 2.0 * model.weights[j] / model.weights[k] * libm::sqrt(s2)
        * libm::sqrt(2.0 * t2 + s2)
        / (t2 + s2);
    let sum = y_i + y_i2;
    let exponent =
        t2 / (2.0 * s2) * ((y_i * y_i + y_i2 * y_i2) / (t2 + s2) - sum * sum / (2.0 * t2 + s2));
    Ok(prefactor * libm::exp(exponent))
}

/// [`bayes_factor_merge`] integrated against `y_i ~ N(μ_i, σ²)` and
/// `y_i2 ~ N(μ_i2, σ²)`:
///
/// `(2π_j/π_k) (2τ²+σ²)/√(2(σ²+τ²)² − σ⁴) · exp[−¼τ²{−(μ_i−μ_i2)²/σ⁴ + (μ_i+μ_i2)²/(2(σ²+τ²)² − σ⁴)}]`.
///
/// The integral is finite for all parameters, but its Monte Carlo estimate
/// has finite variance only when `τ² < σ²`.
pub fn expected_bayes_factor(
    model: &BayesMixtureModel,
    mu_i: f64,
    mu_i2: f64,
    j: usize,
    k: usize,
) -> Result<f64> {
    check_distinct(j, k, model)?;
    let (s2, t2) = (model.sigma2, model.tau2);
    let d = 2.0 * (s2 + t2) * (s2 + t2) - s2 * s2;
    let prefactor = 2.0 * model.weights[j] / model.weights[k] * (2.0 * t2 + s2) / libm::sqrt(d);
    let diff = mu_i - mu_i2;
    let sum = mu_i + mu_i2;
    let exponent = -0.25 * t2 * (-(diff * diff) / (s2 * s2) + sum * sum / d);
    Ok(prefactor * libm::exp(exponent))
}

/// Labels plus per-cluster sufficient statistics.
///
/// Cluster sums are always re-accumulated over the cluster's members in
/// increasing index order, so they agree bit for bit with a from-scratch
/// recomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
    sums: Vec<f64>,
    sum_sqs: Vec<f64>,
}

impl MixtureState {
    pub fn new(y: &[f64], labels: Vec<usize>, k: usize) -> Result<Self> {
        if y.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: y.len(),
                right: labels.len(),
            });
        }
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::LabelOutOfRange { index: i, label: l, k });
            }
            members[l].push(i);
        }
        let mut state = Self {
            labels,
            members,
            sums: vec![0.0; k],
            sum_sqs: vec![0.0; k],
        };
        for c in 0..k {
            state.refresh(y, c);
        }
        Ok(state)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn count(&self, cluster: usize) -> usize {
        self.members[cluster].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn sum(&self, cluster: usize) -> f64 {
        self.sums[cluster]
    }

    pub fn sum_sq(&self, cluster: usize) -> f64 {
        self.sum_sqs[cluster]
    }

    pub fn occupied(&self) -> usize {
        self.members.iter().filter(|m| !m.is_empty()).count()
    }

    fn refresh(&mut self, y: &[f64], cluster: usize) {
        let (mut s, mut ss) = (0.0, 0.0);
        for &i in &self.members[cluster] {
            s += y[i];
            ss += y[i] * y[i];
        }
        self.sums[cluster] = s;
        self.sum_sqs[cluster] = ss;
    }

    fn remove(&mut self, y: &[f64], i: usize) {
        let c = self.labels[i];
        if let Ok(pos) = self.members[c].binary_search(&i) {
            self.members[c].remove(pos);
        }
        self.refresh(y, c);
    }

    fn insert(&mut self, y: &[f64], i: usize, cluster: usize) {
        let pos = self.members[cluster].binary_search(&i).unwrap_or_else(|p| p);
        self.members[cluster].insert(pos, i);
        self.labels[i] = cluster;
        self.refresh(y, cluster);
    }

    /// Whether the stored statistics equal a fresh pass over `labels`.
    pub fn matches_recomputation(&self, y: &[f64]) -> bool {
        let k = self.members.len();
        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0; k];
        let mut sum_sqs = vec![0.0; k];
        for (i, &l) in self.labels.iter().enumerate() {
            counts[l] += 1;
            sums[l] += y[i];
            sum_sqs[l] += y[i] * y[i];
        }
        counts == self.counts()
            && sums.iter().zip(&self.sums).all(|(a, b)| a.to_bits() == b.to_bits())
            && sum_sqs
                .iter()
                .zip(&self.sum_sqs)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    #[default]
    Sequential,
    /// `N` updates at uniformly drawn positions per sweep.
    Random,
}

/// One collapsed Gibbs sweep.
///
/// Each visited `z_i` is redrawn from
/// `p(z_i = k | z_{−i}, y) ∝ π_k N(y_i; m_k, s_k² + σ²)` with
/// `m_k = τ² S_k / (N_k τ² + σ²)` and `s_k² = τ² σ² / (N_k τ² + σ²)`, the
/// cluster statistics taken without `i`.
pub fn gibbs_step<R: Rng + ?Sized>(
    model: &BayesMixtureModel,
    y: &[f64],
    state: &mut MixtureState,
    scan: ScanOrder,
    rng: &mut R,
) -> Result<()> {
    let k = model.components();
    if state.members.len() != k {
        return Err(Error::LengthMismatch {
            left: state.members.len(),
            right: k,
        });
    }
    if y.len() != state.labels.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: state.labels.len(),
        });
    }
    let ln_weights: Vec<f64> = model.weights.iter().map(|&w| libm::log(w)).collect();
    let mut ln_p = vec![0.0; k];
    let n = y.len();
    for step in 0..n {
        let i = match scan {
            ScanOrder::Sequential => step,
            ScanOrder::Random => rng.random_range(0..n),
        };
        state.remove(y, i);
        for c in 0..k {
            ln_p[c] = ln_weights[c] + model.ln_predictive(y[i], state.count(c), state.sums[c]);
        }
        let max = ln_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in ln_p.iter_mut() {
            *v = libm::exp(*v - max);
            total += *v;
        }
        let mut u = rng.random::<f64>() * total;
        let mut chosen = k - 1;
        for (c, &w) in ln_p.iter().enumerate() {
            if u < w {
                chosen = c;
                break;
            }
            u -= w;
        }
        state.insert(y, i, chosen);
    }
    Ok(())
}

/// `‖A − A⁽⁰⁾‖₀` between the co-clustering matrices of two labellings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AdjacencyLoss {
    pub l0: u64,
}

/// Counts ordered pairs `i ≠ j` that are co-clustered under one labelling
/// but not the other.
pub fn adjacency_l0(z_a: &[usize], z_b: &[usize]) -> Result<AdjacencyLoss> {
    if z_a.len() != z_b.len() {
        return Err(Error::LengthMismatch {
            left: z_a.len(),
            right: z_b.len(),
        });
    }
    fn pairs(sizes: impl Iterator<Item = u64>) -> u64 {
        sizes.map(|s| s * s.saturating_sub(1) / 2).sum()
    }
    let mut a: BTreeMap<usize, u64> = BTreeMap::new();
    let mut b: BTreeMap<usize, u64> = BTreeMap::new();
    let mut ab: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (&x, &y) in z_a.iter().zip(z_b) {
        *a.entry(x).or_default() += 1;
        *b.entry(y).or_default() += 1;
        *ab.entry((x, y)).or_default() += 1;
    }
    let same_a = pairs(a.into_values());
    let same_b = pairs(b.into_values());
    let same_both = pairs(ab.into_values());
    Ok(AdjacencyLoss {
        l0: 2 * (same_a + same_b - 2 * same_both),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// Labels drawn uniformly, as from the prior.
    #[default]
    Prior,
    /// Every observation in its own component (requires `K ≥ N`).
    Singletons,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesSimConfig {
    /// Observations, and number of components.
    pub n: usize,
    pub c: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default)]
    pub scale: ScaleConvention,
    pub tau2: f64,
    #[serde(default)]
    pub scan: ScanOrder,
    #[serde(default)]
    pub init: Initialization,
}

impl BayesSimConfig {
    pub fn new(n: usize, c: f64, sweeps: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            n,
            c,
            sweeps,
            burn_in,
            seed,
            scale: ScaleConvention::default(),
            tau2: DEFAULT_TAU2,
            scan: ScanOrder::default(),
            init: Initialization::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least two observations"));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid("c", "must be positive and finite"));
        }
        if self.sweeps == 0 {
            return Err(Error::invalid("sweeps", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesSimResult {
    pub c: f64,
    pub sigma2: f64,
    pub truth: Vec<usize>,
    pub y: Vec<f64>,
    /// One loss per retained sweep.
    pub l0: Vec<u64>,
}

impl BayesSimResult {
    pub fn median_l0(&self) -> f64 {
        let mut v = self.l0.clone();
        v.sort_unstable();
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2] as f64
        } else {
            (v[m / 2 - 1] + v[m / 2]) as f64 / 2.0
        }
    }
}

/// Simulates `z_i ~ Uniform{1..N}`, `y_i ~ N(z_i/N, σ²)` and runs the
/// collapsed sampler with `K = N` equally weighted components, recording the
/// adjacency loss against the true partition after each retained sweep.
pub fn run_bayes_sim(config: &BayesSimConfig) -> Result<BayesSimResult> {
    config.validate()?;
    let n = config.n;
    let sigma = config.scale.sigma(config.c, n);
    let sigma2 = sigma * sigma;
    let model = BayesMixtureModel::uniform(n, sigma2, config.tau2)?;
    let group = config.c.to_bits();
    let mut data_rng = replicate_rng(config.seed, Experiment::Bayes, group, 0);
    let truth: Vec<usize> = (0..n).map(|_| data_rng.random_range(0..n)).collect();
    let y: Vec<f64> = truth
        .iter()
        .map(|&z| {
            let eps: f64 = data_rng.sample(StandardNormal);
            (z + 1) as f64 / n as f64 + sigma * eps
        })
        .collect();

    let mut chain_rng = replicate_rng(config.seed, Experiment::Bayes, group, 1);
    let init = match config.init {
        Initialization::Prior => (0..n).map(|_| chain_rng.random_range(0..n)).collect(),
        Initialization::Singletons => (0..n).collect(),
    };
    let mut state = MixtureState::new(&y, init, n)?;
    let mut l0 = Vec::with_capacity(config.sweeps);
    for sweep in 0..config.burn_in + config.sweeps {
        gibbs_step(&model, &y, &mut state, config.scan, &mut chain_rng)?;
        if sweep >= config.burn_in {
            l0.push(adjacency_l0(state.labels(), &truth)?.l0);
        }
    }
    Ok(BayesSimResult {
        c: config.c,
        sigma2,
        truth,
        y,
        l0,
    })
}
