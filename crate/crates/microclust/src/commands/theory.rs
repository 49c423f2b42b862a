use std::path::PathBuf;

use microclust_core::assignment::{
    correct_prob_bounds_p, infeasibility_bounds, ChiSquareBounds, EquallySpacedMixture1D,
    InfeasibilityBounds,
};
use microclust_core::combinatorics::{expected_matches_bounds, expected_matches_exact};
use serde::{Deserialize, Serialize};

use super::RunContext;
use crate::error::{CliError, Result};
use crate::manifest::write_json;

pub const OUTPUT: &str = "theory.json";

/// Exact expectations are only formed for groups up to this size.
const EXACT_LIMIT: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfeasibilityQuery {
    /// Width `ℓ` of the interval holding the means.
    pub ell: f64,
    pub sigma: f64,
    pub n: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiSquareQuery {
    pub p: usize,
    pub delta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySettings {
    /// Group sizes for the expected-match bounds.
    pub derange: Vec<u64>,
    pub infeasibility: Option<InfeasibilityQuery>,
    pub chisq: Option<ChiSquareQuery>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerangementRow {
    pub group_size: u64,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    /// Exact `E[z_m]` as a reduced fraction, when computed.
    pub exact: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TheoryReport {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub derangements: Vec<DerangementRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasibility: Option<InfeasibilityBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_square: Option<ChiSquareBounds>,
}

pub fn compute(settings: &TheorySettings) -> Result<TheoryReport> {
    if settings.derange.is_empty() && settings.infeasibility.is_none() && settings.chisq.is_none()
    {
        return Err(CliError::Usage(
            "nothing to compute: pass --derange, --infeasibility or --chisq".into(),
        ));
    }
    let mut report = TheoryReport::default();
    for &n in &settings.derange {
        let b = expected_matches_bounds(n)?;
        let exact = if n <= EXACT_LIMIT {
            Some(expected_matches_exact(n)?.to_string())
        } else {
            None
        };
        report.derangements.push(DerangementRow {
            group_size: n,
            lower: b.lower,
            upper: b.upper,
            gap: b.gap(),
            exact,
        });
    }
    if let Some(q) = &settings.infeasibility {
        let mix = EquallySpacedMixture1D::new(q.n, q.ell, q.sigma)?;
        report.infeasibility = Some(infeasibility_bounds(&mix, q.t)?);
    }
    if let Some(q) = &settings.chisq {
        report.chi_square = Some(correct_prob_bounds_p(q.delta, q.sigma, q.p)?);
    }
    Ok(report)
}

pub fn run(settings: &TheorySettings, ctx: &RunContext) -> Result<Vec<PathBuf>> {
    ctx.record("theory", settings, |ctx| {
        let report = compute(settings)?;
        let path = ctx.path(OUTPUT);
        write_json(&path, &report)?;
        Ok(vec![path])
    })
}
