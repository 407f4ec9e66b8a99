use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SrfError};
use crate::geometry::{Domain, Region};
use crate::optimizers::{GrowthTrace, Method};
use crate::oracles::{clip_unit, FunctionOracle};
use crate::quadrature::eval_grid;

pub const DEFAULT_EPS_M: f64 = 0.15;
pub const DEFAULT_EPS_V: f64 = 0.01;
pub const DEFAULT_SAMPLES_PER_DIM: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Robust,
    Adversarial,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub mean: f64,
    pub variance: f64,
    pub contains_u0: bool,
    /// Normalized volume `∏r / 2^n`.
    pub volume: f64,
    pub samples_used: usize,
    pub verdict: Verdict,
}

/// Mean and variance of `f` over a cell-centred grid in `reg`, and the
/// robust/adversarial verdict.
///
/// Robust: mean ≥ 1 - ε_m and variance ≤ ε_v. Adversarial: mean ≤ ε_m and
/// variance ≥ ε_v. With `u0` given, both also require `u0 ∈ reg`.
pub fn validate_region<O: FunctionOracle + ?Sized>(
    oracle: &O,
    reg: &Region,
    u0: Option<&[f64]>,
    eps_m: f64,
    eps_v: f64,
    samples_per_dim: usize,
) -> Result<RegionReport> {
    let n = reg.dim();
    if n != oracle.dim() {
        return Err(SrfError::DimensionMismatch {
            expected: oracle.dim(),
            got: n,
        });
    }
    if !(oracle.domain().contains(reg.lower()) && oracle.domain().contains(reg.upper())) {
        return Err(SrfError::InvalidRegion("region extends beyond the oracle's domain".into()));
    }
    if samples_per_dim == 0 {
        return Err(SrfError::InvalidParams("samples_per_dim must be positive".into()));
    }
    let counts = vec![samples_per_dim; n];
    let (a, r) = (reg.lower(), reg.sides());
    let vals = eval_grid(oracle, &counts, |idx, u| {
        for k in 0..n {
            u[k] = a[k] + (idx[k] as f64 + 0.5) * r[k] / samples_per_dim as f64;
        }
    })?;
    let count = vals.len() as f64;
    let vals: Vec<f64> = vals.into_iter().map(clip_unit).collect();
    let mean = vals.iter().sum::<f64>() / count;
    let variance = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    let contains_u0 = u0.map(|u| reg.contains(u)).unwrap_or(true);
    let verdict = if contains_u0 && mean >= 1.0 - eps_m && variance <= eps_v {
        Verdict::Robust
    } else if contains_u0 && mean <= eps_m && variance >= eps_v {
        Verdict::Adversarial
    } else {
        Verdict::Neither
    };
    Ok(RegionReport {
        mean,
        variance,
        contains_u0,
        volume: reg.normalized_volume(),
        samples_used: vals.len(),
        verdict,
    })
}

/// Mean raw region volume over the raw domain volume.
pub fn srvr(region_volumes: &[f64], domain: &Domain) -> Result<f64> {
    if region_volumes.is_empty() {
        return Err(SrfError::Empty("no region volumes".into()));
    }
    if let Some(v) = region_volumes.iter().find(|v| !(**v >= 0.0)) {
        return Err(SrfError::InvalidParams(format!("region volume {v} is negative")));
    }
    let mean = region_volumes.iter().sum::<f64>() / region_volumes.len() as f64;
    Ok(mean / domain.volume())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrvrSummary {
    pub srvr: f64,
    pub runs: usize,
    pub per_method: BTreeMap<Method, f64>,
}

/// SRVR over the final regions of `traces`, overall and per method. All
/// traces must share one domain.
pub fn srvr_summary(traces: &[GrowthTrace]) -> Result<SrvrSummary> {
    let first = traces.first().ok_or_else(|| SrfError::Empty("no traces".into()))?;
    let domain = &first.domain;
    let mut all = Vec::with_capacity(traces.len());
    let mut by_method: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for t in traces {
        if t.domain != *domain {
            return Err(SrfError::ShapeMismatch("traces cover different domains".into()));
        }
        let v = t.final_region()?.volume();
        all.push(v);
        by_method.entry(t.method).or_default().push(v);
    }
    let per_method = by_method
        .into_iter()
        .map(|(m, vs)| srvr(&vs, domain).map(|s| (m, s)))
        .collect::<Result<_>>()?;
    Ok(SrvrSummary {
        srvr: srvr(&all, domain)?,
        runs: traces.len(),
        per_method,
    })
}
