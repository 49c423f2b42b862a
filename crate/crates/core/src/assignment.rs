//! Maximum-likelihood assignment when every mixture parameter is known.
//!
//! With equal spherical covariances the most likely component for `y` is the
//! nearest mean, so all questions here reduce to nearest-neighbour geometry
//! plus Gaussian tail probabilities.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{replicate_rng, Experiment};
use crate::special::{chi_square_cdf, normal_cdf, normal_two_sided_tail};

/// How the noise level follows from `c` and the number of entities `N`.
///
/// The narrated one-dimensional results (half correct at `c = 2/3`, about
/// 0.2 at `c = 2`) correspond to `σ = c/N`, which is the default; `σ² = c/N`
/// is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleConvention {
    /// `σ = c / N`
    #[default]
    Sigma,
    /// `σ² = c / N`
    SigmaSquared,
}

impl ScaleConvention {
    pub fn sigma(self, c: f64, n: usize) -> f64 {
        match self {
            ScaleConvention::Sigma => c / n as f64,
            ScaleConvention::SigmaSquared => libm::sqrt(c / n as f64),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleConvention::Sigma => "sigma",
            ScaleConvention::SigmaSquared => "sigma-squared",
        }
    }
}

/// Geometry outside the range of the means in one-dimensional simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// The mixture has exactly `N` components; the two end components own
    /// half-lines.
    #[default]
    Finite,
    /// The grid of means continues past both ends, so every component has an
    /// interior cell of width `δ`. Observations nearest a mean outside the
    /// mixture count as misassigned.
    Unbounded,
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(name, "must be positive and finite"));
    }
    Ok(())
}

/// Index of the nearest mean, lowest index on ties.
fn nearest<'a>(y: &[f64], means: impl Iterator<Item = &'a [f64]>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, mu) in means.enumerate() {
        let d: f64 = y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
}

/// `argmax_k log φ(y; μ_k, σ² I)`, zero-based, by exhaustive scan.
pub fn ml_assign<M: AsRef<[f64]>>(y: &[f64], means: &[M], sigma: f64) -> Result<usize> {
    check_positive("sigma", sigma)?;
    if means.is_empty() {
        return Err(Error::Empty("mean list"));
    }
    for m in means {
        if m.as_ref().len() != y.len() {
            return Err(Error::LengthMismatch {
                left: y.len(),
                right: m.as_ref().len(),
            });
        }
    }
    Ok(nearest(y, means.iter().map(AsRef::as_ref)).expect("non-empty"))
}

/// `N` components with means `offset + k ℓ/N`, `k = 1..=N`, and common
/// standard deviation `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquallySpacedMixture1D {
    n: usize,
    range_width: f64,
    sigma: f64,
    offset: f64,
}

impl EquallySpacedMixture1D {
    pub fn new(n: usize, range_width: f64, sigma: f64) -> Result<Self> {
        Self::with_offset(n, range_width, sigma, 0.0)
    }

    pub fn with_offset(n: usize, range_width: f64, sigma: f64, offset: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one component"));
        }
        check_positive("range_width", range_width)?;
        check_positive("sigma", sigma)?;
        if !offset.is_finite() {
            return Err(Error::invalid("offset", "must be finite"));
        }
        Ok(Self {
            n,
            range_width,
            sigma,
            offset,
        })
    }

    /// Means `k/N` on the unit interval.
    pub fn unit_interval(n: usize, sigma: f64) -> Result<Self> {
        Self::new(n, 1.0, sigma)
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn range_width(&self) -> f64 {
        self.range_width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `δ = ℓ / N`.
    pub fn spacing(&self) -> f64 {
        self.range_width / self.n as f64
    }

    /// Mean of zero-based component `k`.
    pub fn mean(&self, k: usize) -> f64 {
        self.offset + (k as f64 + 1.0) * self.spacing()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.mean(k)).collect()
    }

    /// Grid index nearest `y`, ignoring the ends of the mixture. Ties go to
    /// the lower index.
    pub fn grid_index(&self, y: f64) -> i64 {
        let delta = self.spacing();
        let x = (y - self.mean(0)) / delta;
        let mut k = libm::ceil(x - 0.5) as i64;
        // Rounding can misplace points within an ulp of a midpoint; settle
        // them by comparing actual distances, as the scan does.
        let dist = |j: i64| {
            let m = self.offset + (j as f64 + 1.0) * delta;
            (y - m) * (y - m)
        };
        while dist(k - 1) <= dist(k) {
            k -= 1;
        }
        while dist(k + 1) < dist(k) {
            k += 1;
        }
        k
    }

    /// Nearest component, the fast path of [`ml_assign`] for this grid.
    pub fn assign(&self, y: f64) -> usize {
        if y.is_nan() {
            return 0;
        }
        let k = self.grid_index(y.clamp(self.mean(0), self.mean(self.n - 1)));
        k.clamp(0, self.n as i64 - 1) as usize
    }

    /// Component owning `y` on the unbounded grid, if it is one of ours.
    pub fn assign_unbounded(&self, y: f64) -> Option<usize> {
        if !y.is_finite() {
            return None;
        }
        let k = self.grid_index(y);
        (0..self.n as i64).contains(&k).then_some(k as usize)
    }

    /// `δ / (2σ)`.
    fn half_gap(&self) -> f64 {
        self.spacing() / (2.0 * self.sigma)
    }
}

/// Probability that an observation is assigned to its own component.
///
/// Interior components succeed with `2Φ(δ/(2σ)) − 1`, the two end
/// components with `Φ(δ/(2σ))`. With `edge_exact` off the interior value is
/// used for every component; with it on the result is the average over
/// components.
pub fn correct_prob_1d(mix: &EquallySpacedMixture1D, edge_exact: bool) -> f64 {
    let x = mix.half_gap();
    let interior = 1.0 - normal_two_sided_tail(x);
    if !edge_exact {
        return interior;
    }
    match mix.components() {
        1 => 1.0,
        n => {
            let edge = normal_cdf(x);
            ((n - 2) as f64 * interior + 2.0 * edge) / n as f64
        }
    }
}

/// Concentration and zero-correct limits for the number of correct
/// assignments `X_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityBounds {
    pub t: f64,
    /// Centre of the concentration statement, `2Φ(ℓ/(2Nσ)) − 1`.
    pub center: f64,
    /// Bound `2 exp(−2 t² N)` on `P(|X_N/N − center| > t)`.
    pub concentration_bound: f64,
    /// Finite-`N` value `[2 − 2Φ(ℓ/(2Nσ))]^N` of `P(X_N = 0)`.
    pub zero_correct_finite: f64,
    /// Limit `exp(−ℓ/(√(2π) σ))` as `N → ∞` with `ℓ/σ` fixed.
    pub zero_correct_limit: f64,
}

pub fn infeasibility_bounds(mix: &EquallySpacedMixture1D, t: f64) -> Result<InfeasibilityBounds> {
    check_positive("t", t)?;
    let n = mix.components() as f64;
    let x = mix.half_gap();
    let miss = normal_two_sided_tail(x);
    Ok(InfeasibilityBounds {
        t,
        center: 1.0 - miss,
        concentration_bound: 2.0 * libm::exp(-2.0 * t * t * n),
        zero_correct_finite: libm::exp(n * libm::log(miss)),
        zero_correct_limit: libm::exp(-mix.range_width() / (libm::sqrt(2.0 * PI) * mix.sigma())),
    })
}

/// Regular grid of means in the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeMeans {
    pub dim: usize,
    /// Points per axis of the enclosing grid.
    pub side: usize,
    /// Row-major coordinates, `dim` per point.
    pub coords: Vec<f64>,
    /// Minimum pairwise distance (`∞` for a single point).
    pub separation: f64,
}

impl LatticeMeans {
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// Places `n` means on the first `n` points (lexicographic order) of the
/// cubic grid with `side = ⌈n^{1/p}⌉` points per axis spanning `[0, 1]^p`.
///
/// Among axis-aligned grids holding `n` points, the cube with the smallest
/// side count has the largest spacing `1/(side − 1)`.
pub fn build_lattice_means(n: usize, dim: usize) -> Result<LatticeMeans> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one mean"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "must be at least 1"));
    }
    let side = lattice_side(n, dim);
    let step = if side > 1 { 1.0 / (side - 1) as f64 } else { 0.0 };
    let mut coords = Vec::with_capacity(n * dim);
    let mut digits = alloc::vec![0usize; dim];
    for _ in 0..n {
        coords.extend(digits.iter().map(|&d| d as f64 * step));
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < side {
                break;
            }
            *d = 0;
        }
    }
    let separation = if n > 1 { step } else { f64::INFINITY };
    Ok(LatticeMeans {
        dim,
        side,
        coords,
        separation,
    })
}

/// Smallest `s` with `s^dim ≥ n`.
fn lattice_side(n: usize, dim: usize) -> usize {
    let covers = |s: usize| {
        let mut acc: u128 = 1;
        for _ in 0..dim {
            acc = acc.saturating_mul(s as u128);
            if acc >= n as u128 {
                return true;
            }
        }
        acc >= n as u128
    };
    let mut s = libm::ceil(libm::pow(n as f64, 1.0 / dim as f64)).max(1.0) as usize;
    while s > 1 && covers(s - 1) {
        s -= 1;
    }
    while !covers(s) {
        s += 1;
    }
    s
}

/// Spherical mixture in `R^p` with common standard deviation `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalMixtureP {
    pub means: LatticeMeans,
    pub sigma: f64,
}

impl SphericalMixtureP {
    pub fn lattice(n: usize, dim: usize, sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        Ok(Self {
            means: build_lattice_means(n, dim)?,
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.dim
    }

    pub fn separation(&self) -> f64 {
        self.means.separation
    }

    pub fn assign(&self, y: &[f64]) -> usize {
        nearest(y, self.means.points()).expect("lattice is non-empty")
    }
}

/// Chi-square sandwich on the probability of correct assignment in `R^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareBounds {
    /// `P(χ²_p < δ²/(2σ²))`
    pub lower: f64,
    /// `P(χ²_p < δ²/σ²)`
    pub upper: f64,
    /// Normal approximation to `lower`.
    pub normal_approx_lower: f64,
    /// Normal approximation to `upper`.
    pub normal_approx_upper: f64,
    /// `P(χ²_p < δ²/(4σ²))`: the chance of landing within `δ/2` of the true
    /// mean, which always yields a correct assignment.
    pub inner_ball: f64,
}

/// `P(χ²_p < δ²/(cσ²))` for `c ∈ {2, 1}`, with the CLT approximation
/// `Φ((x − p)/√(2p))` of each.
pub fn correct_prob_bounds_p(delta: f64, sigma: f64, dim: usize) -> Result<ChiSquareBounds> {
    check_positive("delta", delta)?;
    check_positive("sigma", sigma)?;
    if dim == 0 {
        return Err(Error::invalid("dim", "must be at least 1"));
    }
    let p = dim as f64;
    let ratio = delta * delta / (sigma * sigma);
    let clt = |x: f64| normal_cdf((x - p) / libm::sqrt(2.0 * p));
    Ok(ChiSquareBounds {
        lower: chi_square_cdf(ratio / 2.0, p),
        upper: chi_square_cdf(ratio, p),
        normal_approx_lower: clt(ratio / 2.0),
        normal_approx_upper: clt(ratio),
        inner_ball: chi_square_cdf(ratio / 4.0, p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSimConfig {
    pub n: usize,
    pub c: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub scale: ScaleConvention,
    #[serde(default)]
    pub boundary: Boundary,
}

impl AssignmentSimConfig {
    pub fn new(n: usize, c: f64, replicates: usize, seed: u64) -> Self {
        Self {
            n,
            c,
            replicates,
            seed,
            scale: ScaleConvention::default(),
            boundary: Boundary::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least two entities"));
        }
        check_positive("c", self.c)?;
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.scale.sigma(self.c, self.n)
    }

    pub fn mixture(&self) -> Result<EquallySpacedMixture1D> {
        EquallySpacedMixture1D::unit_interval(self.n, self.sigma())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSimResult {
    pub c: f64,
    pub n: usize,
    pub replicates: usize,
    pub proportion_correct_mean: f64,
    pub proportion_correct_se: f64,
    pub zero_correct_frequency: f64,
    pub theory_proportion: f64,
    /// Correct assignments `X_N` per replicate.
    #[serde(skip)]
    pub correct_per_replicate: Vec<u64>,
}

impl AssignmentSimResult {
    /// Fraction of replicates with `|X_N/N − center| > t`.
    pub fn deviation_frequency(&self, center: f64, t: f64) -> f64 {
        let n = self.n as f64;
        let hits = self
            .correct_per_replicate
            .iter()
            .filter(|&&x| (x as f64 / n - center).abs() > t)
            .count();
        hits as f64 / self.correct_per_replicate.len() as f64
    }
}

/// One replicate: draws `y_i ~ N(μ_i, σ²)` for every component and counts
/// how many are assigned back to their own component.
pub fn assignment_replicate(config: &AssignmentSimConfig, replicate: u64) -> Result<u64> {
    config.validate()?;
    let mix = config.mixture()?;
    let mut rng = replicate_rng(
        config.seed,
        Experiment::Assignment,
        config.c.to_bits(),
        replicate,
    );
    let sigma = mix.sigma();
    let mut correct = 0u64;
    for k in 0..mix.components() {
        let eps: f64 = rng.sample(StandardNormal);
        let y = mix.mean(k) + sigma * eps;
        let hit = match config.boundary {
            Boundary::Finite => mix.assign(y) == k,
            Boundary::Unbounded => mix.assign_unbounded(y) == Some(k),
        };
        correct += u64::from(hit);
    }
    Ok(correct)
}

/// Aggregates replicate counts. Order does not matter.
pub fn summarize_assignment(
    config: &AssignmentSimConfig,
    correct_per_replicate: Vec<u64>,
) -> Result<AssignmentSimResult> {
    config.validate()?;
    let mix = config.mixture()?;
    let n = config.n as f64;
    let reps = correct_per_replicate.len();
    if reps == 0 {
        return Err(Error::Empty("replicate results"));
    }
    let props: Vec<f64> = correct_per_replicate.iter().map(|&x| x as f64 / n).collect();
    let mean = props.iter().sum::<f64>() / reps as f64;
    let se = if reps > 1 {
        let var = props.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (reps - 1) as f64;
        libm::sqrt(var / reps as f64)
    } else {
        libm::sqrt(mean * (1.0 - mean) / n)
    };
    let zeros = correct_per_replicate.iter().filter(|&&x| x == 0).count();
    Ok(AssignmentSimResult {
        c: config.c,
        n: config.n,
        replicates: reps,
        proportion_correct_mean: mean,
        proportion_correct_se: se,
        zero_correct_frequency: zeros as f64 / reps as f64,
        theory_proportion: correct_prob_1d(&mix, config.boundary == Boundary::Finite),
        correct_per_replicate,
    })
}

pub fn run_assignment_sim(config: &AssignmentSimConfig) -> Result<AssignmentSimResult> {
    config.validate()?;
    let counts = (0..config.replicates as u64)
        .map(|r| assignment_replicate(config, r))
        .collect::<Result<Vec<_>>>()?;
    summarize_assignment(config, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionSimConfig {
    pub n: usize,
    pub dim: usize,
    pub sigma: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl DimensionSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least two entities"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        check_positive("sigma", self.sigma)?;
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        Ok(())
    }

    fn stream_group(&self) -> u64 {
        crate::rng::mix(self.n as u64) ^ crate::rng::mix(self.dim as u64 + 0x100) ^ self.sigma.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSimResult {
    pub n: usize,
    pub dim: usize,
    pub sigma: f64,
    pub separation: f64,
    pub replicates: usize,
    pub proportion_correct: f64,
    /// Binomial standard error over all `n × replicates` assignments.
    pub proportion_se: f64,
    pub bounds: ChiSquareBounds,
    /// Whether the proportion lies in `[lower − 3 SE, upper + 3 SE]`.
    pub within_bounds: bool,
}

pub fn dimension_replicate(
    config: &DimensionSimConfig,
    mix: &SphericalMixtureP,
    replicate: u64,
) -> u64 {
    let mut rng = replicate_rng(
        config.seed,
        Experiment::Dimension,
        config.stream_group(),
        replicate,
    );
    let mut y = alloc::vec![0.0; mix.dim()];
    let mut correct = 0;
    for (k, mu) in mix.means.points().enumerate() {
        for (yi, m) in y.iter_mut().zip(mu) {
            let eps: f64 = rng.sample(StandardNormal);
            *yi = m + mix.sigma * eps;
        }
        correct += u64::from(mix.assign(&y) == k);
    }
    correct
}

pub fn summarize_dimension(
    config: &DimensionSimConfig,
    mix: &SphericalMixtureP,
    correct_per_replicate: &[u64],
) -> Result<DimensionSimResult> {
    let bounds = correct_prob_bounds_p(mix.separation(), config.sigma, config.dim)?;
    let trials = (config.n * correct_per_replicate.len()) as f64;
    let prop = correct_per_replicate.iter().sum::<u64>() as f64 / trials;
    let se = libm::sqrt(prop * (1.0 - prop) / trials);
    let within = prop >= bounds.lower - 3.0 * se && prop <= bounds.upper + 3.0 * se;
    Ok(DimensionSimResult {
        n: config.n,
        dim: config.dim,
        sigma: config.sigma,
        separation: mix.separation(),
        replicates: correct_per_replicate.len(),
        proportion_correct: prop,
        proportion_se: se,
        bounds,
        within_bounds: within,
    })
}

/// Empirical correct-assignment rate on the lattice mixture, alongside the
/// chi-square sandwich for its separation.
pub fn run_dimension_sim(config: &DimensionSimConfig) -> Result<DimensionSimResult> {
    config.validate()?;
    let mix = SphericalMixtureP::lattice(config.n, config.dim, config.sigma)?;
    let counts: Vec<u64> = (0..config.replicates as u64)
        .map(|r| dimension_replicate(config, &mix, r))
        .collect();
    summarize_dimension(config, &mix, &counts)
}
