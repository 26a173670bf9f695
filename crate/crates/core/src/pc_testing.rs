//! Multiple testing of a family of partial conjunction hypotheses, one per
//! group of elementary hypotheses.

use serde::{Deserialize, Serialize};

use crate::combine::CombiningMethod;
use crate::error::{check_pvalues, invalid, Error, Result};
use crate::partial_conjunction::pc_pvalue;
use crate::procedures::{step_up, RejectionSet, ThresholdCollection, NORMALIZATION_RTOL};

/// Partition of `total` elementary hypotheses into groups, each tested at its
/// own `u_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLayout {
    total: usize,
    groups: Vec<Vec<usize>>,
    u: Vec<usize>,
}

impl GroupLayout {
    pub fn new(total: usize, groups: Vec<Vec<usize>>, u: Vec<usize>) -> Result<Self> {
        if groups.is_empty() {
            return Err(invalid("group layout has no groups"));
        }
        if groups.len() != u.len() {
            return Err(Error::LengthMismatch {
                expected: groups.len(),
                found: u.len(),
            });
        }
        let mut seen = vec![false; total];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(invalid(format!("group {g} is empty")));
            }
            if u[g] == 0 || u[g] > members.len() {
                return Err(invalid(format!(
                    "group {g}: u = {} must lie in [1, {}]",
                    u[g],
                    members.len()
                )));
            }
            for &i in members {
                let slot = seen
                    .get_mut(i)
                    .ok_or(Error::IndexOutOfRange { index: i, len: total })?;
                if *slot {
                    return Err(invalid(format!("hypothesis {i} appears in more than one group")));
                }
                *slot = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(invalid(format!("hypothesis {i} belongs to no group")));
        }
        Ok(Self { total, groups, u })
    }

    /// Consecutive groups of the given sizes with a common `u`.
    pub fn contiguous(sizes: &[usize], u: usize) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|&n| {
                let g: Vec<usize> = (start..start + n).collect();
                start += n;
                g
            })
            .collect::<Vec<_>>();
        Self::new(start, groups, vec![u; sizes.len()])
    }

    /// `u_g = ⌈proportion · n_g⌉`, for "at least this fraction of signals".
    pub fn with_proportion(total: usize, groups: Vec<Vec<usize>>, proportion: f64) -> Result<Self> {
        if !(proportion > 0.0 && proportion <= 1.0) {
            return Err(invalid(format!("proportion {proportion} must lie in (0, 1]")));
        }
        let u = groups
            .iter()
            .map(|g| ((proportion * g.len() as f64).ceil() as usize).clamp(1, g.len().max(1)))
            .collect();
        Self::new(total, groups, u)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn u(&self) -> &[usize] {
        &self.u
    }
}

/// Prior weights `w` and penalty weights `v` with `Σ w_g v_g = G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub prior_w: Vec<f64>,
    pub penalty_v: Vec<f64>,
}

impl WeightScheme {
    pub fn new(prior_w: Vec<f64>, penalty_v: Vec<f64>) -> Result<Self> {
        let ws = Self { prior_w, penalty_v };
        ws.validate()?;
        Ok(ws)
    }

    pub fn unit(g: usize) -> Self {
        Self {
            prior_w: vec![1.0; g],
            penalty_v: vec![1.0; g],
        }
    }

    /// Scales `w` so the normalization holds.
    pub fn renormalized(prior_w: Vec<f64>, penalty_v: Vec<f64>) -> Result<Self> {
        let sum: f64 = prior_w.iter().zip(&penalty_v).map(|(w, v)| w * v).sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::WeightNormalization {
                sum,
                expected: prior_w.len() as f64,
            });
        }
        let scale = prior_w.len() as f64 / sum;
        Self::new(prior_w.into_iter().map(|w| w * scale).collect(), penalty_v)
    }

    pub fn len(&self) -> usize {
        self.prior_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior_w.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.prior_w.len();
        if self.penalty_v.len() != g {
            return Err(Error::LengthMismatch {
                expected: g,
                found: self.penalty_v.len(),
            });
        }
        if g == 0 {
            return Err(invalid("empty weight scheme"));
        }
        if self.prior_w.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("prior weights must be finite and nonnegative"));
        }
        if self.penalty_v.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("penalty weights must be finite and positive"));
        }
        let sum: f64 = self.prior_w.iter().zip(&self.penalty_v).map(|(w, v)| w * v).sum();
        if (sum - g as f64).abs() > NORMALIZATION_RTOL * g as f64 {
            return Err(Error::WeightNormalization {
                sum,
                expected: g as f64,
            });
        }
        Ok(())
    }
}

/// One partial conjunction p-value per group.
pub fn compute_pc_pvalues(p: &[f64], layout: &GroupLayout, method: CombiningMethod) -> Result<Vec<f64>> {
    check_pvalues(p)?;
    if p.len() != layout.total {
        return Err(Error::LengthMismatch {
            expected: layout.total,
            found: p.len(),
        });
    }
    let mut buf = Vec::new();
    layout
        .groups
        .iter()
        .zip(&layout.u)
        .map(|(members, &u)| {
            buf.clear();
            buf.extend(members.iter().map(|&i| p[i]));
            pc_pvalue(&buf, u, method)
        })
        .collect()
}

/// Runs the step-up procedure described by `tc` on the group PC p-values.
/// `tc` must be built on the scheme's prior weights.
pub fn test_pc_family(
    p: &[f64],
    layout: &GroupLayout,
    method: CombiningMethod,
    ws: &WeightScheme,
    tc: &ThresholdCollection,
) -> Result<RejectionSet> {
    let g = layout.num_groups();
    if tc.m != g || ws.len() != g {
        return Err(Error::LengthMismatch {
            expected: g,
            found: if tc.m != g { tc.m } else { ws.len() },
        });
    }
    if tc.prior_w != ws.prior_w {
        return Err(invalid("threshold collection prior weights differ from the weight scheme"));
    }
    let pc = compute_pc_pvalues(p, layout, method)?;
    step_up(&pc, tc, &ws.penalty_v)
}

/// `Σ_{g ∈ G₀ ∩ R} v_g / Σ_{g ∈ R} v_g`, with `0/0 = 0`.
pub fn realized_weighted_fdp(rejected: &[usize], true_null: &[bool], penalty_v: &[f64]) -> f64 {
    let (mut false_vol, mut total) = (0.0, 0.0);
    for &g in rejected {
        total += penalty_v[g];
        if true_null[g] {
            false_vol += penalty_v[g];
        }
    }
    if total > 0.0 {
        false_vol / total
    } else {
        0.0
    }
}

/// `g ∈ G₀` iff `k_g < u_g`.
pub fn true_null_groups(true_k: &[usize], u: &[usize]) -> Vec<bool> {
    true_k.iter().zip(u).map(|(k, u)| k < u).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedures::ShapeFunction;

    #[test]
    fn layout_validation() {
        assert!(GroupLayout::new(3, vec![vec![0, 1], vec![2]], vec![1, 1]).is_ok());
        assert!(GroupLayout::new(3, vec![vec![0, 1], vec![1, 2]], vec![1, 1]).is_err());
        assert!(GroupLayout::new(3, vec![vec![0, 1]], vec![1]).is_err());
        assert!(GroupLayout::new(3, vec![vec![0, 1, 2]], vec![4]).is_err());
        assert!(GroupLayout::new(2, vec![vec![0, 5]], vec![1]).is_err());
        assert!(GroupLayout::new(1, vec![vec![], vec![0]], vec![1, 1]).is_err());
        let l = GroupLayout::with_proportion(7, vec![vec![0, 1, 2], vec![3, 4, 5, 6]], 0.5).unwrap();
        assert_eq!(l.u(), &[2, 2]);
        let l = GroupLayout::with_proportion(5, vec![vec![0], vec![1, 2, 3, 4]], 0.3).unwrap();
        assert_eq!(l.u(), &[1, 2]);
    }

    #[test]
    fn weight_scheme_validation() {
        assert!(WeightScheme::new(vec![1.5, 0.5], vec![1.0, 1.0]).is_ok());
        assert!(WeightScheme::new(vec![1.5, 1.5], vec![1.0, 1.0]).is_err());
        assert!(WeightScheme::new(vec![1.0, 1.0], vec![0.0, 2.0]).is_err());
        let ws = WeightScheme::renormalized(vec![3.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(ws.prior_w, vec![1.5, 0.5]);
    }

    #[test]
    fn single_group_rejects_iff_pc_below_alpha() {
        let layout = GroupLayout::contiguous(&[3], 2).unwrap();
        let ws = WeightScheme::unit(1);
        let tc = ThresholdCollection::unweighted(0.05, 1, ShapeFunction::Identity).unwrap();
        for p in [[0.01, 0.02, 0.5], [0.01, 0.03, 0.5], [0.2, 0.02, 0.01]] {
            let pc = compute_pc_pvalues(&p, &layout, CombiningMethod::Simes).unwrap()[0];
            let r = test_pc_family(&p, &layout, CombiningMethod::Simes, &ws, &tc).unwrap();
            assert_eq!(r.len() == 1, pc <= 0.05);
        }
    }

    #[test]
    fn singleton_groups_reduce_to_elementary() {
        let p = [0.3, 0.01, 0.77];
        let layout = GroupLayout::contiguous(&[1, 1, 1], 1).unwrap();
        for m in [CombiningMethod::Fisher, CombiningMethod::Simes, CombiningMethod::Stouffer] {
            let pc = compute_pc_pvalues(&p, &layout, m).unwrap();
            for (a, b) in pc.iter().zip(&p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn four_groups_bh_example() {
        // Groups of size 1 make the Simes PC p-values equal the inputs.
        let p = [0.002, 0.01, 0.2, 0.9];
        let layout = GroupLayout::contiguous(&[1, 1, 1, 1], 1).unwrap();
        let ws = WeightScheme::unit(4);
        let tc = ThresholdCollection::unweighted(0.05, 4, ShapeFunction::Identity).unwrap();
        let r = test_pc_family(&p, &layout, CombiningMethod::Simes, &ws, &tc).unwrap();
        assert_eq!(r.indices, vec![0, 1]);

        let all_big = [0.3, 0.4, 0.5, 0.6];
        let r = test_pc_family(&all_big, &layout, CombiningMethod::Simes, &ws, &tc).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn doubly_weighted_family() {
        let p = [0.01, 0.02, 0.5, 0.03, 0.04, 0.9];
        let layout = GroupLayout::contiguous(&[3, 3], 2).unwrap();
        let ws = WeightScheme::new(vec![1.6, 0.4], vec![1.0, 1.0]).unwrap();
        let tc = ThresholdCollection::new(0.1, ws.prior_w.clone(), ShapeFunction::Identity).unwrap();
        // PC p-values (Simes, u=2): group 0 -> min(2*0.02, 2*0.5/2) = 0.04, group 1 -> 0.08
        let r = test_pc_family(&p, &layout, CombiningMethod::Simes, &ws, &tc).unwrap();
        // r=2: thresholds 0.1*1.6 = 0.16, 0.1*0.4 = 0.04; group 1 fails; r=1: 0.08 ≥ 0.04 keeps group 0
        assert_eq!(r.indices, vec![0]);
        let wrong = ThresholdCollection::unweighted(0.1, 2, ShapeFunction::Identity).unwrap();
        assert!(test_pc_family(&p, &layout, CombiningMethod::Simes, &ws, &wrong).is_err());
    }

    #[test]
    fn fdp_examples() {
        assert_eq!(realized_weighted_fdp(&[], &[true, false], &[1.0, 1.0]), 0.0);
        assert_eq!(realized_weighted_fdp(&[0, 1], &[true, true], &[1.0, 1.0]), 1.0);
        let v = [1.0, 3.0, 2.0];
        assert_eq!(realized_weighted_fdp(&[0, 1], &[false, true, false], &v), 0.75);
        assert_eq!(true_null_groups(&[0, 2, 3], &[2, 2, 2]), vec![true, false, false]);
    }
}
