//! Step-up procedures defined by threshold collections, adjusted p-values,
//! and witnesses for the structural properties (self-consistency, stability).
//!
//! A threshold collection maps a hypothesis index `i` and a rejection volume
//! `r` to a threshold `Δ(i, r)`; `L(r) = {i : p_i <= Δ(i, r)}`. The step-up
//! procedure rejects `L(r̂)` where `r̂` is the greatest fixed point of
//! `r ↦ |L(r)|_v`.

use serde::{Deserialize, Serialize};

use crate::combine::{harmonic, sorted, storey_pi0};
use crate::error::{check_lambda, check_pvalues, invalid, Error, Result};

/// Relative tolerance for the `Σ w_i v_i = m` constraint.
pub const NORMALIZATION_RTOL: f64 = 1e-9;

/// Bracket width at which bisection for adjusted p-values stops.
pub const ADJUSTED_TOL: f64 = 1e-10;

/// Shape function `β` applied to the rejection volume.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeFunction {
    /// `β(r) = r`
    #[default]
    Identity,
    /// `β(r) = r / (1 + 1/2 + ... + 1/m)`
    ReciprocalSum,
    /// `β(r) = Σ_{x <= r} x ν(x)` for a discrete distribution `ν`, given as
    /// `(support point, mass)` pairs.
    DiscreteNu { points: Vec<(f64, f64)> },
}

impl ShapeFunction {
    pub fn discrete(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("discrete shape distribution has no support points"));
        }
        for &(x, mass) in &points {
            if !(x > 0.0 && x.is_finite()) || mass.is_nan() || mass < 0.0 {
                return Err(invalid(format!("invalid support point ({x}, {mass})")));
            }
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("shape distribution masses sum to {total}, not 1")));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::DiscreteNu { points })
    }

    /// Point mass at 1: the step-up procedure becomes Bonferroni.
    pub fn bonferroni() -> Self {
        Self::DiscreteNu { points: vec![(1.0, 1.0)] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::DiscreteNu { points } => Self::discrete(points.clone()).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, r: f64, m: usize) -> f64 {
        match self {
            Self::Identity => r,
            Self::ReciprocalSum => r / harmonic(m),
            Self::DiscreteNu { points } => points
                .iter()
                .take_while(|(x, _)| *x <= r)
                .map(|(x, mass)| x * mass)
                .sum(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "identity" | "bh" => Ok(Self::Identity),
            "reciprocal_sum" | "reciprocal" | "by" => Ok(Self::ReciprocalSum),
            "bonferroni" => Ok(Self::bonferroni()),
            other => Err(invalid(format!("unknown shape function '{other}'"))),
        }
    }
}

/// Level, prior weights, shape, and optional Storey adaptivity of a step-up
/// procedure over `m` hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCollection {
    pub alpha: f64,
    pub m: usize,
    pub prior_w: Vec<f64>,
    pub shape: ShapeFunction,
    /// Storey tuning parameter; when set the thresholds are `α r / (π̂₀ m)`.
    pub adaptive: Option<f64>,
}

impl ThresholdCollection {
    pub fn new(alpha: f64, prior_w: Vec<f64>, shape: ShapeFunction) -> Result<Self> {
        let tc = Self {
            alpha,
            m: prior_w.len(),
            prior_w,
            shape,
            adaptive: None,
        };
        tc.validate()?;
        Ok(tc)
    }

    /// Unit prior weights.
    pub fn unweighted(alpha: f64, m: usize, shape: ShapeFunction) -> Result<Self> {
        Self::new(alpha, vec![1.0; m], shape)
    }

    /// Adaptive BH with the Storey estimator at tuning parameter `lambda`.
    pub fn adaptive_storey(alpha: f64, m: usize, lambda: f64) -> Result<Self> {
        let tc = Self {
            alpha,
            m,
            prior_w: vec![1.0; m],
            shape: ShapeFunction::Identity,
            adaptive: Some(lambda),
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("level {} must lie in [0, 1]", self.alpha)));
        }
        if self.m == 0 {
            return Err(invalid("threshold collection over zero hypotheses"));
        }
        if self.prior_w.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                found: self.prior_w.len(),
            });
        }
        if let Some(w) = self.prior_w.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(invalid(format!("prior weight {w} must be finite and nonnegative")));
        }
        self.shape.validate()?;
        if let Some(lambda) = self.adaptive {
            check_lambda(lambda)?;
            if self.prior_w.iter().any(|&w| w != 1.0) {
                return Err(invalid("adaptive thresholds require unit prior weights"));
            }
            if self.shape != ShapeFunction::Identity {
                return Err(invalid("adaptive thresholds use the identity shape"));
            }
        }
        Ok(())
    }

    /// Same collection at a different level.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    /// Rescales prior weights so that `Σ w_i v_i = m`.
    pub fn renormalized(&self, penalty_v: &[f64]) -> Result<Self> {
        check_penalty(penalty_v, self.m)?;
        let sum = weighted_sum(&self.prior_w, penalty_v);
        if sum <= 0.0 || sum.is_nan() {
            return Err(Error::WeightNormalization { sum, expected: self.m as f64 });
        }
        let scale = self.m as f64 / sum;
        let mut tc = self.clone();
        tc.prior_w.iter_mut().for_each(|w| *w *= scale);
        Ok(tc)
    }

    /// Fixes the data-dependent part (the Storey estimate) for a p-value vector.
    pub fn resolve(&self, p: &[f64]) -> Result<Thresholds<'_>> {
        let pi0 = match self.adaptive {
            Some(lambda) => Some(storey_pi0(p, lambda)?),
            None => None,
        };
        Ok(Thresholds { tc: self, pi0 })
    }
}

/// A threshold collection evaluated for one p-value vector.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds<'a> {
    tc: &'a ThresholdCollection,
    pi0: Option<f64>,
}

impl Thresholds<'_> {
    /// `Δ(i, r)`
    pub fn at(&self, i: usize, r: f64) -> f64 {
        let tc = self.tc;
        let m = tc.m as f64;
        match self.pi0 {
            Some(pi0) => tc.alpha * r / pi0 / m,
            None => tc.alpha * tc.prior_w[i] * tc.shape.eval(r, tc.m) / m,
        }
    }

    pub fn pi0(&self) -> Option<f64> {
        self.pi0
    }
}

/// Output of a step-up procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionSet {
    /// Rejected indices, ascending.
    pub indices: Vec<usize>,
    /// `r̂`, equal to the penalty volume of `indices`.
    pub fixed_point_volume: f64,
    /// Number of evaluations of `L(r)` performed.
    pub iterations: usize,
}

impl RejectionSet {
    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            fixed_point_volume: 0.0,
            iterations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// `|A|_v = Σ_{i ∈ A} v_i`.
pub fn weighted_volume(indices: &[usize], v: &[f64]) -> Result<f64> {
    indices.iter().try_fold(0.0, |acc, &i| {
        v.get(i)
            .map(|x| acc + x)
            .ok_or(Error::IndexOutOfRange { index: i, len: v.len() })
    })
}

fn weighted_sum(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn check_penalty(v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::LengthMismatch { expected: m, found: v.len() });
    }
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(invalid(format!("penalty weight {x} must be finite and nonnegative")));
    }
    Ok(())
}

fn check_inputs(p: &[f64], tc: &ThresholdCollection, v: &[f64]) -> Result<()> {
    tc.validate()?;
    check_pvalues(p)?;
    if p.len() != tc.m {
        return Err(Error::LengthMismatch { expected: tc.m, found: p.len() });
    }
    check_penalty(v, tc.m)?;
    let sum = weighted_sum(&tc.prior_w, v);
    let expected = tc.m as f64;
    if (sum - expected).abs() > NORMALIZATION_RTOL * expected {
        return Err(Error::WeightNormalization { sum, expected });
    }
    Ok(())
}

/// Greatest fixed point of `r ↦ |L(r)|_v` by monotone iteration from `Σ v`.
fn step_up_unchecked(p: &[f64], th: &Thresholds<'_>, v: &[f64]) -> RejectionSet {
    let mut members: Vec<usize> = (0..p.len()).collect();
    let mut r: f64 = v.iter().sum();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| p[i] <= th.at(i, r))
            .collect();
        let shrunk = next.len() < members.len();
        members = next;
        r = members.iter().map(|&i| v[i]).sum();
        if !shrunk {
            break;
        }
    }
    RejectionSet {
        indices: members,
        fixed_point_volume: r,
        iterations,
    }
}

/// Step-up procedure for threshold collection `tc` and penalty weights `v`.
pub fn step_up(p: &[f64], tc: &ThresholdCollection, penalty_v: &[f64]) -> Result<RejectionSet> {
    check_inputs(p, tc, penalty_v)?;
    let th = tc.resolve(p)?;
    Ok(step_up_unchecked(p, &th, penalty_v))
}

/// Adaptive BH with the Storey estimator, unit weights.
pub fn adaptive_step_up_storey(p: &[f64], alpha: f64, lambda: f64) -> Result<RejectionSet> {
    check_pvalues(p)?;
    let tc = ThresholdCollection::adaptive_storey(alpha, p.len(), lambda)?;
    step_up(p, &tc, &vec![1.0; p.len()])
}

/// Classical BH adjusted p-values: running minimum of `m p_(k) / k` from the top.
pub fn bh_adjusted(p: &[f64]) -> Result<Vec<f64>> {
    check_pvalues(p)?;
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adj = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (k, &i) in order.iter().enumerate().rev() {
        running = running.min(m as f64 * p[i] / (k + 1) as f64);
        adj[i] = running.min(1.0);
    }
    Ok(adj)
}

/// Bonferroni adjusted p-values `min(m p_i, 1)`.
pub fn bonferroni_adjusted(p: &[f64]) -> Result<Vec<f64>> {
    check_pvalues(p)?;
    let m = p.len() as f64;
    Ok(p.iter().map(|&x| (m * x).min(1.0)).collect())
}

/// Adjusted p-values: the smallest level at which each hypothesis is rejected.
///
/// Unit-weight BH, its reciprocal-sum variant and the adaptive Storey variant
/// use closed forms; every other configuration bisects over the level.
pub fn adjusted_pvalues(p: &[f64], tc: &ThresholdCollection, penalty_v: &[f64]) -> Result<Vec<f64>> {
    check_inputs(p, tc, penalty_v)?;
    let unit = tc.prior_w.iter().chain(penalty_v).all(|&x| x == 1.0);
    if unit {
        let scale = match (&tc.adaptive, &tc.shape) {
            (Some(lambda), _) => Some(storey_pi0(p, *lambda)?),
            (None, ShapeFunction::Identity) => Some(1.0),
            (None, ShapeFunction::ReciprocalSum) => Some(harmonic(tc.m)),
            _ => None,
        };
        if let Some(scale) = scale {
            let bh = bh_adjusted(p)?;
            return Ok(bh.into_iter().map(|a| (scale * a).min(1.0)).collect());
        }
    }
    let rejected_at = |alpha: f64| -> Result<RejectionSet> {
        let tc_a = tc.with_alpha(alpha);
        let th = tc_a.resolve(p)?;
        Ok(step_up_unchecked(p, &th, penalty_v))
    };
    let at_one = rejected_at(1.0)?;
    let mut adj = vec![1.0; p.len()];
    for &i in &at_one.indices {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > ADJUSTED_TOL {
            let mid = 0.5 * (lo + hi);
            if rejected_at(mid)?.contains(i) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        adj[i] = hi;
    }
    Ok(adj)
}

/// True iff every candidate index satisfies `p_i <= Δ(i, |candidate|_v)`.
pub fn check_self_consistency(
    p: &[f64],
    tc: &ThresholdCollection,
    penalty_v: &[f64],
    candidate: &[usize],
) -> Result<bool> {
    check_inputs(p, tc, penalty_v)?;
    let r = weighted_volume(candidate, penalty_v)?;
    let th = tc.resolve(p)?;
    Ok(candidate.iter().all(|&i| p[i] <= th.at(i, r)))
}

/// Stability witness: for each rejected `i`, setting `p_i = 0` reproduces the
/// same rejection set.
pub fn check_stability(p: &[f64], tc: &ThresholdCollection, penalty_v: &[f64]) -> Result<bool> {
    let base = step_up(p, tc, penalty_v)?;
    let mut q = p.to_vec();
    for &i in &base.indices {
        let old = q[i];
        q[i] = 0.0;
        let again = step_up(&q, tc, penalty_v)?;
        q[i] = old;
        if again.indices != base.indices {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `|R^{-i}|_v`: the rejection volume with `p_i` replaced by 0.
pub fn zeroed_volume(p: &[f64], tc: &ThresholdCollection, penalty_v: &[f64], i: usize) -> Result<f64> {
    if i >= p.len() {
        return Err(Error::IndexOutOfRange { index: i, len: p.len() });
    }
    let mut q = p.to_vec();
    q[i] = 0.0;
    Ok(step_up(&q, tc, penalty_v)?.fixed_point_volume)
}

/// Textbook BH: reject the `k̂` smallest p-values, `k̂ = max{k : p_(k) <= k α / m}`.
pub fn bh_textbook(p: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_pvalues(p)?;
    let m = p.len();
    let s = sorted(p);
    let k_hat = (1..=m)
        .rev()
        .find(|&k| s[k - 1] <= k as f64 * alpha / m as f64)
        .unwrap_or(0);
    if k_hat == 0 {
        return Ok(Vec::new());
    }
    let cut = s[k_hat - 1];
    Ok((0..m).filter(|&i| p[i] <= cut).collect())
}
