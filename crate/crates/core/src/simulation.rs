//! Monte Carlo harness for the meta-analysis setting.
//!
//! Each replicate draws its own ChaCha stream keyed by `(seed, rep_index)`,
//! so results do not depend on how replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::CombiningMethod;
use crate::error::{invalid, Error, Result};
use crate::numerics::normal_sf;
use crate::partial_conjunction::pc_pvalue;
use crate::pc_testing::{realized_weighted_fdp, WeightScheme};
use crate::procedures::{step_up, weighted_volume, ShapeFunction, ThresholdCollection};
use crate::replicability::{
    realized_replicability_error, replicability_analysis, select_features, PValueMatrix, SelectionRule,
};

pub const DEFAULT_BLOCK_SIZE: usize = 4;

/// Within-study dependence of the z-statistics. Studies are always independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Independent,
    /// One-factor Gaussian model with correlation `rho >= 0`.
    EquicorrelatedPrds,
    /// Consecutive blocks of features with exchangeable correlation
    /// `-1/(b-1)`, optionally mixed with the common factor.
    BlockArbitrary,
}

impl Dependence {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "independent" => Ok(Self::Independent),
            "equicorrelated_prds" | "prds" => Ok(Self::EquicorrelatedPrds),
            "block_arbitrary" | "arbitrary" => Ok(Self::BlockArbitrary),
            other => Err(invalid(format!("unknown dependence '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub m: usize,
    pub n: usize,
    /// Number of studies in which each feature has an effect; the effects sit
    /// in the first `true_k[i]` studies.
    pub true_k: Vec<usize>,
    pub mu: f64,
    pub rho: f64,
    pub dependence: Dependence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl SimulationScenario {
    /// The first `round(fraction * m)` features have effects in `k` studies,
    /// the rest in none.
    #[allow(clippy::too_many_arguments)]
    pub fn with_signal_fraction(
        m: usize,
        n: usize,
        fraction: f64,
        k: usize,
        mu: f64,
        rho: f64,
        dependence: Dependence,
        reps: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(invalid(format!("signal fraction {fraction} is outside [0, 1]")));
        }
        let signals = (fraction * m as f64).round() as usize;
        let true_k = (0..m).map(|i| if i < signals { k } else { 0 }).collect();
        let s = Self {
            m,
            n,
            true_k,
            mu,
            rho,
            dependence,
            block_size: None,
            reps,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(invalid("scenario needs m >= 1 and n >= 1"));
        }
        if self.true_k.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                found: self.true_k.len(),
            });
        }
        if let Some(i) = self.true_k.iter().position(|&k| k > self.n) {
            return Err(invalid(format!("true_k[{i}] = {} exceeds n = {}", self.true_k[i], self.n)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be finite and nonnegative, got {}", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("rho must be in [0, 1], got {}", self.rho)));
        }
        if self.dependence == Dependence::Independent && self.rho != 0.0 {
            return Err(invalid("independent scenarios require rho = 0"));
        }
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if let Some(b) = self.block_size {
            if b < 2 {
                return Err(invalid(format!("block_size must be at least 2, got {b}")));
            }
        }
        Ok(())
    }

    pub fn block(&self) -> usize {
        self.block_size.unwrap_or(DEFAULT_BLOCK_SIZE)
    }

    /// Features whose partial conjunction null at `u` is true, i.e. `k(i) < u`.
    pub fn true_null(&self, u: usize) -> Vec<bool> {
        self.true_k.iter().map(|&k| k < u).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
}

impl McEstimate {
    /// Mean and standard error, summing in the given order.
    pub fn from_samples(xs: &[f64]) -> Self {
        let reps = xs.len();
        if reps == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                reps,
            };
        }
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let se = if reps > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (reps - 1) as f64).sqrt() / (reps as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, reps }
    }

    /// `mean <= bound + 3 se`
    pub fn within(&self, bound: f64) -> bool {
        self.mean <= bound + 3.0 * self.se
    }
}

fn rep_rng(seed: u64, rep_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep_index);
    rng
}

fn draw_study(s: &SimulationScenario, rng: &mut ChaCha8Rng, z: &mut [f64]) {
    let common: f64 = rng.sample(StandardNormal);
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    if s.dependence == Dependence::BlockArbitrary {
        let b = s.block();
        for chunk in z.chunks_mut(b) {
            let len = chunk.len();
            if len < 2 {
                continue;
            }
            let mean = chunk.iter().sum::<f64>() / len as f64;
            let scale = (len as f64 / (len - 1) as f64).sqrt();
            for x in chunk.iter_mut() {
                *x = (*x - mean) * scale;
            }
        }
    }
    if s.rho > 0.0 {
        let (a, b) = (s.rho.sqrt(), (1.0 - s.rho).sqrt());
        for zi in z.iter_mut() {
            *zi = a * common + b * *zi;
        }
    }
}

/// One `m × n` matrix of one-sided p-values `1 - Φ(X)`.
pub fn gen_meta_matrix(s: &SimulationScenario, rep_index: u64) -> Result<PValueMatrix> {
    s.validate()?;
    let mut rng = rep_rng(s.seed, rep_index);
    let mut data = vec![0.0; s.m * s.n];
    let mut z = vec![0.0; s.m];
    for j in 0..s.n {
        draw_study(s, &mut rng, &mut z);
        for i in 0..s.m {
            let shift = if j < s.true_k[i] { s.mu } else { 0.0 };
            data[i * s.n + j] = normal_sf(z[i] + shift);
        }
    }
    PValueMatrix::new(s.m, s.n, data)
}

fn run_reps<T, F>(reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..reps as u64).into_par_iter().map(f).collect()
}

fn check_u(u: usize, n: usize) -> Result<()> {
    if u == 0 || u > n {
        return Err(invalid(format!("u must satisfy 1 <= u <= n = {n}, got {u}")));
    }
    Ok(())
}

fn pc_row_pvalues(mat: &PValueMatrix, u: usize, method: CombiningMethod) -> Result<Vec<f64>> {
    (0..mat.rows()).map(|i| pc_pvalue(mat.row(i), u, method)).collect()
}

/// `(α/m) Σ_{i : k(i) < u} v_i w_i`
pub fn fdr_bound(s: &SimulationScenario, u: usize, ws: &WeightScheme, alpha: f64) -> f64 {
    let total: f64 = s
        .true_null(u)
        .iter()
        .enumerate()
        .filter(|(_, &null)| null)
        .map(|(i, _)| ws.prior_w[i] * ws.penalty_v[i])
        .sum();
    alpha * total / s.m as f64
}

/// Weighted FDR of a step-up procedure applied to the per-feature partial
/// conjunction p-values.
pub fn mc_fdr_pc(
    s: &SimulationScenario,
    u: usize,
    method: CombiningMethod,
    ws: &WeightScheme,
    tc: &ThresholdCollection,
) -> Result<McEstimate> {
    s.validate()?;
    check_u(u, s.n)?;
    method.validate()?;
    ws.validate()?;
    if ws.len() != s.m || tc.m != s.m {
        return Err(Error::LengthMismatch {
            expected: s.m,
            found: if ws.len() != s.m { ws.len() } else { tc.m },
        });
    }
    let null = s.true_null(u);
    let fdp = run_reps(s.reps, |rep| {
        let mat = gen_meta_matrix(s, rep)?;
        let pc = pc_row_pvalues(&mat, u, method)?;
        let rej = step_up(&pc, tc, &ws.penalty_v)?;
        Ok(realized_weighted_fdp(&rej.indices, &null, &ws.penalty_v))
    })?;
    Ok(McEstimate::from_samples(&fdp))
}

/// Weighted error rate of the replicability lower bounds `k̂`.
pub fn mc_replicability_error(
    s: &SimulationScenario,
    rule: &SelectionRule,
    method: CombiningMethod,
    ws: &WeightScheme,
    q: f64,
    beta: &ShapeFunction,
) -> Result<McEstimate> {
    s.validate()?;
    method.validate()?;
    ws.validate()?;
    let err = run_reps(s.reps, |rep| {
        let mat = gen_meta_matrix(s, rep)?;
        let report = replicability_analysis(&mat, rule, method, ws, q, beta)?;
        Ok(realized_replicability_error(&report, &s.true_k, &ws.penalty_v))
    })?;
    Ok(McEstimate::from_samples(&err))
}

/// The statistic `V` paired with the probed partial conjunction p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DccStatistic {
    /// Number of rejections of BH at `alpha` on the partial conjunction
    /// p-values of all features.
    RejectionVolume { alpha: f64 },
    /// Number of features selected by BH at `alpha` on the Simes global-null
    /// p-values after the probed row is set to 0. The probed row itself is
    /// counted, so `V >= 1`.
    SelectionVolumeMinusRow { alpha: f64 },
}

/// The true-null feature with the most signals, ties to the lowest index.
pub fn probe_feature(s: &SimulationScenario, u: usize) -> Result<usize> {
    s.true_k
        .iter()
        .enumerate()
        .filter(|(_, &k)| k < u)
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .ok_or(Error::NoTrueNull { u })
}

/// Estimates of `E[1(U <= c V) / V]` per `c`, with `0/0 = 0`, where `U` is the
/// partial conjunction p-value of the probed feature.
pub fn dcc_probe(
    s: &SimulationScenario,
    u: usize,
    method: CombiningMethod,
    c_grid: &[f64],
    statistic: DccStatistic,
) -> Result<Vec<(f64, McEstimate)>> {
    s.validate()?;
    check_u(u, s.n)?;
    method.validate()?;
    if let Some(c) = c_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(invalid(format!("grid values must be positive and finite, got {c}")));
    }
    let alpha = match statistic {
        DccStatistic::RejectionVolume { alpha } | DccStatistic::SelectionVolumeMinusRow { alpha } => alpha,
    };
    let tc = ThresholdCollection::unweighted(alpha, s.m, ShapeFunction::Identity)?;
    let unit = vec![1.0; s.m];
    let ws = WeightScheme::unit(s.m);
    let target = probe_feature(s, u)?;

    let pairs = run_reps(s.reps, |rep| {
        let mat = gen_meta_matrix(s, rep)?;
        let probe = pc_pvalue(mat.row(target), u, method)?;
        let volume = match statistic {
            DccStatistic::RejectionVolume { .. } => {
                let pc = pc_row_pvalues(&mat, u, method)?;
                step_up(&pc, &tc, &unit)?.fixed_point_volume
            }
            DccStatistic::SelectionVolumeMinusRow { alpha } => {
                let zeroed = mat.with_row_filled(target, 0.0);
                let sel = select_features(&zeroed, &SelectionRule::bh_on(alpha, CombiningMethod::Simes), CombiningMethod::Simes, &ws)?;
                weighted_volume(&sel, &unit)?
            }
        };
        Ok((probe, volume))
    })?;

    Ok(c_grid
        .iter()
        .map(|&c| {
            let xs: Vec<f64> = pairs
                .iter()
                .map(|&(p, v)| if v > 0.0 && p <= c * v { 1.0 / v } else { 0.0 })
                .collect();
            (c, McEstimate::from_samples(&xs))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(dep: Dependence, rho: f64) -> SimulationScenario {
        SimulationScenario::with_signal_fraction(20, 4, 0.3, 3, 3.0, rho, dep, 50, 7).unwrap()
    }

    #[test]
    fn validation() {
        let mut s = scenario(Dependence::EquicorrelatedPrds, 0.5);
        s.rho = 1.5;
        assert!(s.validate().is_err());
        let mut s = scenario(Dependence::Independent, 0.0);
        s.rho = 0.2;
        assert!(s.validate().is_err());
        let mut s = scenario(Dependence::Independent, 0.0);
        s.true_k[0] = 5;
        assert!(s.validate().is_err());
        s.true_k.pop();
        assert!(s.validate().is_err());
        let mut s = scenario(Dependence::BlockArbitrary, 0.0);
        s.block_size = Some(1);
        assert!(s.validate().is_err());
        assert_eq!(scenario(Dependence::Independent, 0.0).true_k.iter().filter(|&&k| k == 3).count(), 6);
    }

    #[test]
    fn deterministic_per_replicate() {
        let s = scenario(Dependence::EquicorrelatedPrds, 0.5);
        let a = gen_meta_matrix(&s, 3).unwrap();
        let b = gen_meta_matrix(&s, 3).unwrap();
        let c = gen_meta_matrix(&s, 4).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, c);
    }

    #[test]
    fn null_calibration() {
        let s = SimulationScenario {
            m: 100,
            n: 10,
            true_k: vec![0; 100],
            mu: 0.0,
            rho: 0.0,
            dependence: Dependence::Independent,
            block_size: None,
            reps: 100,
            seed: 11,
        };
        let mut pooled: Vec<f64> = (0..100).flat_map(|r| gen_meta_matrix(&s, r).unwrap().data().to_vec()).collect();
        pooled.sort_by(f64::total_cmp);
        let n = pooled.len() as f64;
        let ks = pooled
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks = {ks}");
    }

    #[test]
    fn full_correlation_collapses_study() {
        let s = SimulationScenario {
            m: 6,
            n: 3,
            true_k: vec![0; 6],
            mu: 2.0,
            rho: 1.0,
            dependence: Dependence::EquicorrelatedPrds,
            block_size: None,
            reps: 1,
            seed: 5,
        };
        let mat = gen_meta_matrix(&s, 0).unwrap();
        for j in 0..3 {
            let col = mat.column(j);
            assert!(col.iter().all(|&x| x == col[0]));
        }
    }

    #[test]
    fn block_arbitrary_is_negatively_correlated() {
        let s = SimulationScenario {
            m: 4,
            n: 1,
            true_k: vec![0; 4],
            mu: 0.0,
            rho: 0.0,
            dependence: Dependence::BlockArbitrary,
            block_size: None,
            reps: 1,
            seed: 9,
        };
        let mut rng = rep_rng(1, 0);
        let (mut sum01, mut sum00) = (0.0, 0.0);
        let mut z = vec![0.0; 4];
        let draws = 20000;
        for _ in 0..draws {
            draw_study(&s, &mut rng, &mut z);
            sum01 += z[0] * z[1];
            sum00 += z[0] * z[0];
            assert!(z.iter().sum::<f64>().abs() < 1e-12);
        }
        let (c01, v0) = (sum01 / draws as f64, sum00 / draws as f64);
        assert!((v0 - 1.0).abs() < 0.05, "{v0}");
        assert!((c01 + 1.0 / 3.0).abs() < 0.05, "{c01}");
    }

    #[test]
    fn fdr_trivial_cases() {
        let mut s = scenario(Dependence::Independent, 0.0);
        s.true_k = vec![4; 20];
        s.mu = 10.0;
        let ws = WeightScheme::unit(20);
        let tc = ThresholdCollection::unweighted(0.05, 20, ShapeFunction::Identity).unwrap();
        let est = mc_fdr_pc(&s, 2, CombiningMethod::Simes, &ws, &tc).unwrap();
        assert_eq!((est.mean, est.se), (0.0, 0.0));

        let s = scenario(Dependence::Independent, 0.0);
        let tc0 = tc.with_alpha(0.0);
        let est = mc_fdr_pc(&s, 2, CombiningMethod::Fisher, &ws, &tc0).unwrap();
        assert_eq!(est.mean, 0.0);
        assert!(mc_fdr_pc(&s, 5, CombiningMethod::Fisher, &ws, &tc).is_err());
        assert!((fdr_bound(&s, 2, &ws, 0.05) - 0.05 * 14.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn replicability_trivial_cases() {
        let s = scenario(Dependence::EquicorrelatedPrds, 0.5);
        let ws = WeightScheme::unit(20);
        let est = mc_replicability_error(
            &s,
            &SelectionRule::bh(0.1),
            CombiningMethod::Simes,
            &ws,
            0.0,
            &ShapeFunction::Identity,
        )
        .unwrap();
        assert_eq!(est.mean, 0.0);

        let mut all = s.clone();
        all.true_k = vec![4; 20];
        let est = mc_replicability_error(
            &all,
            &SelectionRule::bh(0.1),
            CombiningMethod::Simes,
            &ws,
            0.1,
            &ShapeFunction::Identity,
        )
        .unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn schedule_invariance() {
        let s = scenario(Dependence::EquicorrelatedPrds, 0.5);
        let ws = WeightScheme::unit(20);
        let tc = ThresholdCollection::unweighted(0.2, 20, ShapeFunction::Identity).unwrap();
        let par = mc_fdr_pc(&s, 2, CombiningMethod::Simes, &ws, &tc).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mc_fdr_pc(&s, 2, CombiningMethod::Simes, &ws, &tc).unwrap());
        assert_eq!(par.mean.to_bits(), serial.mean.to_bits());
        assert_eq!(par.se.to_bits(), serial.se.to_bits());
    }

    #[test]
    fn dcc_probe_basics() {
        let s = scenario(Dependence::Independent, 0.0);
        assert_eq!(probe_feature(&s, 2).unwrap(), 6);
        assert_eq!(probe_feature(&s, 4).unwrap(), 0);
        let mut all = s.clone();
        all.true_k = vec![4; 20];
        assert!(matches!(
            dcc_probe(&all, 2, CombiningMethod::Simes, &[0.1], DccStatistic::RejectionVolume { alpha: 0.05 }),
            Err(Error::NoTrueNull { u: 2 })
        ));
        assert!(dcc_probe(&s, 2, CombiningMethod::Simes, &[0.0], DccStatistic::RejectionVolume { alpha: 0.05 }).is_err());

        // At alpha = 1 every feature is rejected, so V = m and the estimate is P(U <= c m)/m <= c.
        let out = dcc_probe(&s, 2, CombiningMethod::Simes, &[1.0, 10.0], DccStatistic::RejectionVolume { alpha: 1.0 })
            .unwrap();
        for (c, est) in out {
            assert!(est.mean <= c);
            assert!(est.mean <= 1.0 / 20.0 + 1e-15);
        }
    }

    #[test]
    fn mc_estimate_stats() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(McEstimate::from_samples(&[0.5]).se, 0.0);
        assert!(e.within(1.0));
        assert!(!e.within(-2.0));
    }
}
