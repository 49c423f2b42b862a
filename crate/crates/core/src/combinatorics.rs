//! Random allocation among records that share an identical name.
//!
//! When `N_m` records carry the same name and nothing else distinguishes
//! them, the best a resolver can do is hand out the `N_m` identities in a
//! uniformly random order. The number of records that receive their own
//! identity is the number of fixed points of a uniform permutation, whose
//! law is given exactly by derangement numbers.
//!
//! Exact results use arbitrary-precision integers and rationals; the `f64`
//! variants switch to closed forms that stay finite for large groups.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{replicate_rng, Experiment};
use crate::special::ln_factorial;

/// Largest group size for which [`match_pmf`] goes through exact rationals.
pub const EXACT_PMF_LIMIT: u64 = 20;

/// Multiset of name-group sizes `N_m`, stored as `(size, multiplicity)` runs
/// sorted by size.
///
/// Real name distributions have hundreds of millions of singleton groups, so
/// the run-length form is what keeps the census-scale analysis in memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameHistogram {
    runs: Vec<(u64, u64)>,
}

impl NameHistogram {
    /// Builds a histogram from one entry per unique name.
    pub fn from_sizes(sizes: &[u64]) -> Result<Self> {
        Self::from_runs(sizes.iter().map(|&s| (s, 1)))
    }

    /// Builds a histogram from `(group size, number of groups)` pairs.
    ///
    /// Pairs with zero multiplicity are skipped; zero group sizes are
    /// rejected.
    pub fn from_runs(runs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut collected: Vec<(u64, u64)> = Vec::new();
        for (row, (size, mult)) in runs.into_iter().enumerate() {
            if size == 0 {
                return Err(Error::InvalidEntry {
                    row,
                    reason: "group size must be at least 1".into(),
                });
            }
            if mult > 0 {
                collected.push((size, mult));
            }
        }
        if collected.is_empty() {
            return Err(Error::Empty("name histogram"));
        }
        collected.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(collected.len());
        for (size, mult) in collected {
            match merged.last_mut() {
                Some(last) if last.0 == size => last.1 += mult,
                _ => merged.push((size, mult)),
            }
        }
        Ok(Self { runs: merged })
    }

    pub fn runs(&self) -> &[(u64, u64)] {
        &self.runs
    }

    /// Expands the runs into one size per group.
    pub fn sizes(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs
            .iter()
            .flat_map(|&(size, mult)| core::iter::repeat(size).take(mult as usize))
    }

    /// `N = Σ N_m`.
    pub fn total_records(&self) -> u64 {
        self.runs.iter().map(|&(s, m)| s * m).sum()
    }

    /// `M`, the number of unique names.
    pub fn unique_names(&self) -> u64 {
        self.runs.iter().map(|&(_, m)| m).sum()
    }

    /// `Σ N_m²`.
    pub fn sum_of_squares(&self) -> u128 {
        self.runs
            .iter()
            .map(|&(s, m)| u128::from(s) * u128::from(s) * u128::from(m))
            .sum()
    }

    /// `N² / Σ N_m²`, the effective number of names.
    pub fn concentration_ratio(&self) -> f64 {
        let n = self.total_records() as f64;
        n * n / self.sum_of_squares() as f64
    }

    /// `E[S_M] = M / N`.
    pub fn expected_proportion_correct(&self) -> f64 {
        self.unique_names() as f64 / self.total_records() as f64
    }
}

/// Distribution of the number of correctly identified records in one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDistribution {
    pub group_size: u64,
    /// `pmf[z] = P(z_m = z)` for `z = 0..=group_size`.
    pub pmf: Vec<f64>,
}

impl MatchDistribution {
    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(z, p)| z as f64 * p)
            .sum()
    }
}

/// `!n`, the number of permutations of `n` items with no fixed point.
pub fn subfactorial(n: u64) -> BigUint {
    subfactorials(n).pop().expect("table holds at least !0")
}

/// `[!0, !1, ..., !n]` from `!n = (n - 1)(!(n-1) + !(n-2))`.
pub fn subfactorials(n: u64) -> Vec<BigUint> {
    let mut table: Vec<BigUint> = Vec::with_capacity(n as usize + 1);
    table.push(BigUint::one());
    if n >= 1 {
        table.push(BigUint::zero());
    }
    for k in 2..=n {
        let k = k as usize;
        let next = BigUint::from(k - 1) * (&table[k - 1] + &table[k - 2]);
        table.push(next);
    }
    table
}

pub fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

fn check_group_size(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("group_size", "must be at least 1"));
    }
    Ok(())
}

/// Exact fixed-point law `P(z = k) = C(n, k) · !(n - k) / n!`.
pub fn match_pmf_exact(group_size: u64) -> Result<Vec<BigRational>> {
    check_group_size(group_size)?;
    let n = group_size;
    let derangements = subfactorials(n);
    let n_fact = BigInt::from(factorial(n));
    let mut binom = BigUint::one();
    let mut pmf = Vec::with_capacity(n as usize + 1);
    for z in 0..=n {
        if z > 0 {
            binom = binom * BigUint::from(n - z + 1) / BigUint::from(z);
        }
        let count = &binom * &derangements[(n - z) as usize];
        pmf.push(BigRational::new(BigInt::from(count), n_fact.clone()));
    }
    Ok(pmf)
}

/// Fixed-point law as `f64`.
///
/// Up to [`EXACT_PMF_LIMIT`] this is the exact rational rounded once; beyond
/// it uses `P(z = k) = D(n - k) / k!` with `D(m) = Σ_{i≤m} (-1)^i / i!`,
/// which never forms a large factorial.
pub fn match_pmf(group_size: u64) -> Result<MatchDistribution> {
    check_group_size(group_size)?;
    let pmf = if group_size <= EXACT_PMF_LIMIT {
        match_pmf_exact(group_size)?
            .iter()
            .map(|p| p.to_f64().unwrap_or(0.0))
            .collect()
    } else {
        let n = group_size as usize;
        let alternating = alternating_exp_partial_sums(n);
        (0..=n)
            .map(|z| {
                let d = alternating[n - z];
                if d <= 0.0 {
                    0.0
                } else {
                    libm::exp(libm::log(d) - ln_factorial(z as u64))
                }
            })
            .collect()
    };
    Ok(MatchDistribution { group_size, pmf })
}

/// `D(m) = !m / m!` for `m = 0..=n`.
fn alternating_exp_partial_sums(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let mut term = 1.0;
    let mut sum = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        if i > 0 {
            term /= -(i as f64);
        }
        sum += term;
        *slot = sum;
    }
    // D(1) is exactly zero; rounding must not leave a residue there.
    if n >= 1 {
        out[1] = 0.0;
    }
    out
}

/// `E[z_m]` evaluated from the exact pmf.
pub fn expected_matches_exact(group_size: u64) -> Result<BigRational> {
    let pmf = match_pmf_exact(group_size)?;
    Ok(pmf
        .iter()
        .enumerate()
        .fold(BigRational::zero(), |acc, (z, p)| {
            acc + p * BigRational::from_integer(BigInt::from(z))
        }))
}

/// Incomplete-gamma bounds on `E[z_m]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationBounds {
    pub group_size: u64,
    pub lower: f64,
    pub upper: f64,
}

impl ExpectationBounds {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `Γ(n, 1)/Γ(n) ≤ E[z_m] ≤ Γ(n, 1)/Γ(n) + 2^{n-1}/(n-1)!`.
///
/// For integer `n` the lower term is `e⁻¹ Σ_{k<n} 1/k!`; it is evaluated as
/// `1 - e⁻¹ Σ_{k≥n} 1/k!` so that it never rounds above one.
pub fn expected_matches_bounds(group_size: u64) -> Result<ExpectationBounds> {
    check_group_size(group_size)?;
    let n = group_size;
    let mut term = libm::exp(-ln_factorial(n));
    let mut tail = 0.0;
    let mut k = n;
    while term > 0.0 && term > tail * 1e-18 {
        tail += term;
        k += 1;
        term /= k as f64;
    }
    let lower = 1.0 - libm::exp(-1.0) * tail;
    let excess = libm::exp((n - 1) as f64 * core::f64::consts::LN_2 - ln_factorial(n - 1));
    Ok(ExpectationBounds {
        group_size,
        lower,
        upper: lower + excess,
    })
}

/// `ln P(every record correctly identified) = -Σ_m ln N_m!`.
pub fn prob_all_correct(hist: &NameHistogram) -> f64 {
    -hist
        .runs()
        .iter()
        .map(|&(s, m)| m as f64 * ln_factorial(s))
        .sum::<f64>()
}

/// Exact `Π_m 1/N_m!`. The denominator grows quickly; meant for small inputs.
pub fn prob_all_correct_exact(hist: &NameHistogram) -> BigRational {
    let denom = hist
        .runs()
        .iter()
        .fold(BigUint::one(), |acc, &(s, m)| acc * factorial(s).pow(m as u32));
    BigRational::new(BigInt::one(), BigInt::from(denom))
}

/// Entropy (nats) of the empirical name distribution.
pub fn name_entropy(hist: &NameHistogram) -> f64 {
    let n = hist.total_records() as f64;
    let h: f64 = hist
        .runs()
        .iter()
        .map(|&(s, m)| {
            let p = s as f64 / n;
            m as f64 * p * libm::log(p)
        })
        .sum();
    // -0.0 for a single name
    if h == 0.0 {
        0.0
    } else {
        -h
    }
}

/// Hoeffding bound `P(|S_M - M/N| > t) ≤ 2 exp(-2 N² t² / Σ N_m²)`.
pub fn hoeffding_tail(hist: &NameHistogram, t: f64) -> Result<f64> {
    Ok(libm::exp(ln_hoeffding_tail(hist, t)?))
}

/// Natural log of [`hoeffding_tail`], for bounds that underflow `f64`.
pub fn ln_hoeffding_tail(hist: &NameHistogram, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be positive"));
    }
    Ok(core::f64::consts::LN_2 - 2.0 * hist.concentration_ratio() * t * t)
}

/// Monte Carlo draws of the random-allocation procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSamples {
    pub total_records: u64,
    /// Total correct assignments `z` per replicate.
    pub correct: Vec<u64>,
}

impl AllocationSamples {
    /// `S_M = z / N` per replicate.
    pub fn proportions(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.total_records as f64;
        self.correct.iter().map(move |&z| z as f64 / n)
    }

    pub fn mean_proportion(&self) -> f64 {
        self.proportions().sum::<f64>() / self.correct.len() as f64
    }

    /// Fraction of replicates with `|S_M - center| > t`.
    pub fn tail_frequency(&self, center: f64, t: f64) -> f64 {
        let hits = self.proportions().filter(|s| (s - center).abs() > t).count();
        hits as f64 / self.correct.len() as f64
    }
}

/// Shuffles the identities within each name group independently and counts
/// records that land on their own identity. Replicate `r` uses its own
/// stream derived from `seed`.
pub fn simulate_random_allocation(
    hist: &NameHistogram,
    replicates: usize,
    seed: u64,
) -> Result<AllocationSamples> {
    if replicates == 0 {
        return Err(Error::invalid("replicates", "must be at least 1"));
    }
    let largest = hist.runs().last().map_or(0, |&(s, _)| s) as usize;
    let mut perm: Vec<usize> = Vec::with_capacity(largest);
    let mut correct = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let mut rng = replicate_rng(seed, Experiment::Allocation, 0, r as u64);
        let mut z = 0u64;
        for &(size, mult) in hist.runs() {
            if size == 1 {
                z += mult;
                continue;
            }
            for _ in 0..mult {
                perm.clear();
                perm.extend(0..size as usize);
                perm.shuffle(&mut rng);
                z += perm.iter().enumerate().filter(|(i, p)| i == *p).count() as u64;
            }
        }
        correct.push(z);
    }
    Ok(AllocationSamples {
        total_records: hist.total_records(),
        correct,
    })
}
