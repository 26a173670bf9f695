//! Global-null combining functions and the Storey null-proportion estimator.
//!
//! Every combiner sorts its input before doing any arithmetic, so the result
//! depends only on the multiset of p-values and is bitwise reproducible for
//! permuted inputs.

use serde::{Deserialize, Serialize};

use crate::error::{check_lambda, check_pvalues, invalid, Error, Result};
use crate::numerics::{chi_square_survival, normal_sf, upper_quantile};

/// Floor applied to each p-value before taking logs in Fisher's method.
pub const DEFAULT_FISHER_FLOOR: f64 = 1e-300;

/// Tuning parameter used for Simes-Storey when none is given.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CombiningMethod {
    Fisher,
    Stouffer,
    Simes,
    Bonferroni,
    Hommel,
    SimesStorey { lambda: f64 },
}

impl CombiningMethod {
    /// Parses `fisher`, `stouffer`, `simes`, `bonferroni`, `hommel`,
    /// `simes-storey` (or `simes_storey`); `lambda` only applies to the last.
    pub fn parse(name: &str, lambda: Option<f64>) -> Result<Self> {
        let method = match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "fisher" => Self::Fisher,
            "stouffer" => Self::Stouffer,
            "simes" => Self::Simes,
            "bonferroni" => Self::Bonferroni,
            "hommel" => Self::Hommel,
            "simes_storey" | "storey" => Self::SimesStorey {
                lambda: lambda.unwrap_or(DEFAULT_LAMBDA),
            },
            other => return Err(invalid(format!("unknown combining method '{other}'"))),
        };
        method.validate()?;
        Ok(method)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::SimesStorey { lambda } => check_lambda(lambda),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fisher => "fisher",
            Self::Stouffer => "stouffer",
            Self::Simes => "simes",
            Self::Bonferroni => "bonferroni",
            Self::Hommel => "hommel",
            Self::SimesStorey { .. } => "simes_storey",
        }
    }

    /// Applies the global-null combiner to `p`.
    pub fn combine(&self, p: &[f64]) -> Result<f64> {
        match *self {
            Self::Fisher => fisher_combine(p),
            Self::Stouffer => stouffer_combine(p),
            Self::Simes => simes_combine(p),
            Self::Bonferroni => bonferroni_combine(p),
            Self::Hommel => hommel_combine(p),
            Self::SimesStorey { lambda } => simes_storey_combine(p, lambda),
        }
    }
}

pub(crate) fn sorted(p: &[f64]) -> Vec<f64> {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `H_m = 1 + 1/2 + ... + 1/m`.
pub fn harmonic(m: usize) -> f64 {
    (1..=m).map(|j| 1.0 / j as f64).sum()
}

pub fn fisher_combine(p: &[f64]) -> Result<f64> {
    fisher_combine_with_floor(p, DEFAULT_FISHER_FLOOR)
}

/// Fisher's method with each p-value clamped below at `floor` before the log.
pub fn fisher_combine_with_floor(p: &[f64], floor: f64) -> Result<f64> {
    check_pvalues(p)?;
    if !(floor > 0.0 && floor < 1.0) {
        return Err(invalid(format!("Fisher floor must lie in (0, 1), got {floor}")));
    }
    let stat: f64 = sorted(p).iter().map(|&x| -2.0 * x.max(floor).ln()).sum();
    chi_square_survival(stat.max(0.0), 2 * p.len() as u32)
}

pub fn stouffer_combine(p: &[f64]) -> Result<f64> {
    check_pvalues(p)?;
    let s = sorted(p);
    let has_zero = s[0] == 0.0;
    let has_one = s[s.len() - 1] == 1.0;
    match (has_zero, has_one) {
        (true, true) => {
            return Err(Error::Degenerate(
                "Stouffer's method received both p = 0 and p = 1".into(),
            ))
        }
        (true, false) => return Ok(0.0),
        (false, true) => return Ok(1.0),
        _ => {}
    }
    let z: f64 = s.iter().map(|&x| upper_quantile(x)).sum();
    Ok(normal_sf(z / (s.len() as f64).sqrt()))
}

fn simes_sorted(s: &[f64]) -> f64 {
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(k, &x)| m * x / (k + 1) as f64)
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

pub fn simes_combine(p: &[f64]) -> Result<f64> {
    check_pvalues(p)?;
    Ok(simes_sorted(&sorted(p)))
}

pub fn bonferroni_combine(p: &[f64]) -> Result<f64> {
    check_pvalues(p)?;
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((p.len() as f64 * min).min(1.0))
}

pub fn hommel_combine(p: &[f64]) -> Result<f64> {
    check_pvalues(p)?;
    Ok((harmonic(p.len()) * simes_sorted(&sorted(p))).min(1.0))
}

/// `(W(λ) + 1) / ((1 - λ) m)` with `W(λ) = #{i : p_i > λ}`.
pub fn storey_pi0(p: &[f64], lambda: f64) -> Result<f64> {
    check_pvalues(p)?;
    check_lambda(lambda)?;
    let w = p.iter().filter(|&&x| x > lambda).count();
    Ok((w as f64 + 1.0) / ((1.0 - lambda) * p.len() as f64))
}

/// Minimum adjusted p-value of adaptive BH with the Storey estimator:
/// 1 when the smallest p-value exceeds `lambda`, else the minimum of
/// `m π̂₀ p_(k) / k` over `k` with `p_(k) <= lambda`, capped at 1.
pub fn simes_storey_combine(p: &[f64], lambda: f64) -> Result<f64> {
    let pi0 = storey_pi0(p, lambda)?;
    let s = sorted(p);
    if s[0] > lambda {
        return Ok(1.0);
    }
    let m = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .take_while(|(_, &x)| x <= lambda)
        .map(|(k, &x)| m * pi0 * x / (k + 1) as f64)
        .fold(f64::INFINITY, f64::min)
        .min(1.0))
}
