//! Parameter grids given as `start:stop:step` or comma lists.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Grids longer than this are rejected as typos.
const MAX_POINTS: usize = 100_000;

/// Parses `0.1:2:0.1` (inclusive of `stop` up to rounding) or `0.1,0.25,1`.
/// Every point must be finite and positive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    let bad = |why: &str| CliError::Usage(format!("invalid grid {spec:?}: {why}"));
    let points = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() || !stop.is_finite() {
            return Err(bad("step must be positive and bounds finite"));
        }
        if stop < start {
            return Err(bad("stop is below start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > MAX_POINTS {
            return Err(bad("too many points"));
        }
        // Points are start + i·step rounded to 12 significant digits so that
        // 0.1:2:0.1 yields 0.3 rather than 0.30000000000000004.
        (0..count)
            .map(|i| tidy(start + i as f64 * step))
            .collect::<Vec<_>>()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<Vec<_>>>()?
    };
    if points.is_empty() {
        return Err(bad("empty"));
    }
    if points.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(bad("points must be positive and finite"));
    }
    Ok(points)
}

fn tidy(x: f64) -> f64 {
    format!("{x:.12e}").parse().unwrap_or(x)
}

/// A grid in a config file: either a spec string or an explicit array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSetting {
    Spec(String),
    Points(Vec<f64>),
}

impl GridSetting {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match self {
            GridSetting::Spec(s) => parse_grid(s),
            GridSetting::Points(p) => {
                let joined = p.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
                parse_grid(&joined)
            }
        }
    }
}
