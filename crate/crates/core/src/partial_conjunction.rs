//! Partial conjunction p-values `P^{u/m}`: a global-null combiner applied to
//! the `m - u + 1` largest p-values.

use crate::combine::{sorted, CombiningMethod};
use crate::error::{check_lambda, check_pvalues, invalid, Error, Result};

/// Largest `m` accepted by the subset-enumeration oracle.
pub const ORACLE_MAX_M: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialConjunctionQuery {
    pub p: Vec<f64>,
    pub u: usize,
    pub method: CombiningMethod,
}

impl PartialConjunctionQuery {
    pub fn new(p: Vec<f64>, u: usize, method: CombiningMethod) -> Result<Self> {
        check_u(p.len(), u)?;
        Ok(Self { p, u, method })
    }

    pub fn pvalue(&self) -> Result<f64> {
        pc_pvalue(&self.p, self.u, self.method)
    }

    pub fn oracle(&self) -> Result<f64> {
        pc_pvalue_oracle(&self.p, self.u, self.method)
    }
}

fn check_u(m: usize, u: usize) -> Result<()> {
    if u == 0 || u > m {
        return Err(invalid(format!("u = {u} must lie in [1, {m}]")));
    }
    Ok(())
}

/// `P^{u/m}` for the given combining method.
pub fn pc_pvalue(p: &[f64], u: usize, method: CombiningMethod) -> Result<f64> {
    check_pvalues(p)?;
    check_u(p.len(), u)?;
    method.validate()?;
    match method {
        CombiningMethod::SimesStorey { lambda } => pc_storey_pvalue(p, u, lambda),
        CombiningMethod::Bonferroni => {
            let s = sorted(p);
            Ok(((p.len() - u + 1) as f64 * s[u - 1]).min(1.0))
        }
        _ => method.combine(&sorted(p)[u - 1..]),
    }
}

/// Simes-Storey partial conjunction p-value, evaluated directly on the order
/// statistics `p_(u) <= ... <= p_(m)`.
pub fn pc_storey_pvalue(p: &[f64], u: usize, lambda: f64) -> Result<f64> {
    check_pvalues(p)?;
    check_u(p.len(), u)?;
    check_lambda(lambda)?;
    let s = sorted(p);
    let tail = &s[u - 1..];
    if tail[0] > lambda {
        return Ok(1.0);
    }
    let width = tail.len() as f64;
    let above = tail.iter().filter(|&&x| x > lambda).count();
    let pi0 = (above as f64 + 1.0) / ((1.0 - lambda) * width);
    Ok(tail
        .iter()
        .enumerate()
        .take_while(|(_, &x)| x <= lambda)
        .map(|(k, &x)| width * pi0 * x / (k + 1) as f64)
        .fold(f64::INFINITY, f64::min)
        .min(1.0))
}

/// Maximum of the global-null combiner over every subset of size `m - u + 1`.
pub fn pc_pvalue_oracle(p: &[f64], u: usize, method: CombiningMethod) -> Result<f64> {
    check_pvalues(p)?;
    check_u(p.len(), u)?;
    let m = p.len();
    if m > ORACLE_MAX_M {
        return Err(Error::SizeLimit { m, max: ORACLE_MAX_M });
    }
    let k = m - u + 1;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut subset = vec![0.0; k];
    let mut best = f64::NEG_INFINITY;
    loop {
        for (slot, &i) in subset.iter_mut().zip(&idx) {
            *slot = p[i];
        }
        best = best.max(method.combine(&subset)?);
        // next k-combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&j| idx[j] < m - k + j) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(best)
}
