//! Two-step replicability analysis over an `m × n` matrix of p-values
//! (features × studies): select features, then bound from below the number
//! of studies in which each selected feature has an effect.

use serde::{Deserialize, Serialize};

use crate::combine::CombiningMethod;
use crate::error::{invalid, Error, Result};
use crate::partial_conjunction::pc_pvalue;
use crate::pc_testing::WeightScheme;
use crate::procedures::{step_up, weighted_volume, ShapeFunction, ThresholdCollection};

/// Row-major matrix of p-values, rows = features, columns = studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueMatrix {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl PValueMatrix {
    pub fn new(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid("p-value matrix needs at least one row and one column"));
        }
        if data.len() != m * n {
            return Err(Error::LengthMismatch {
                expected: m * n,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid(format!(
                "entry ({}, {}) = {} is outside [0, 1]",
                pos / n,
                pos % n,
                data[pos]
            )));
        }
        Ok(Self { m, n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(invalid(format!(
                "row {bad} has {} entries, expected {n}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), n, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.data[i * self.n + j]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Copy with every entry of row `i` set to `value`.
    pub fn with_row_filled(&self, i: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.data[i * self.n..(i + 1) * self.n].fill(value);
        out
    }

    /// Global-null combination of each row.
    pub fn combined_rows(&self, method: CombiningMethod) -> Result<Vec<f64>> {
        (0..self.m).map(|i| method.combine(self.row(i))).collect()
    }
}

/// Step 1 of the procedure: how features are selected. Rules on combined
/// rows use `combiner` for the global-null p-values, or the partial
/// conjunction method of Step 2 when it is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Step-up procedure on the row-combined global-null p-values.
    StepUpOnCombined {
        alpha: f64,
        shape: ShapeFunction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        adaptive_lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        combiner: Option<CombiningMethod>,
    },
    /// `{i : combined_i <= threshold}`.
    FixedThresholdOnCombined {
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        combiner: Option<CombiningMethod>,
    },
    /// Step-up procedure on the p-values of a single study.
    StepUpOnColumn {
        column: usize,
        alpha: f64,
        shape: ShapeFunction,
    },
}

impl SelectionRule {
    /// BH at level `q` on the global-null p-values of the Step 2 method.
    pub fn bh(q: f64) -> Self {
        Self::StepUpOnCombined {
            alpha: q,
            shape: ShapeFunction::Identity,
            adaptive_lambda: None,
            combiner: None,
        }
    }

    /// BH at level `q` on global-null p-values from `combiner`.
    pub fn bh_on(q: f64, combiner: CombiningMethod) -> Self {
        Self::StepUpOnCombined {
            alpha: q,
            shape: ShapeFunction::Identity,
            adaptive_lambda: None,
            combiner: Some(combiner),
        }
    }
}

fn threshold_collection(
    alpha: f64,
    ws: &WeightScheme,
    shape: &ShapeFunction,
    adaptive: Option<f64>,
) -> Result<ThresholdCollection> {
    match adaptive {
        Some(lambda) => ThresholdCollection::adaptive_storey(alpha, ws.len(), lambda),
        None => ThresholdCollection::new(alpha, ws.prior_w.clone(), shape.clone()),
    }
}

/// Indices of the selected features, ascending.
pub fn select_features(
    mat: &PValueMatrix,
    rule: &SelectionRule,
    method: CombiningMethod,
    ws: &WeightScheme,
) -> Result<Vec<usize>> {
    if ws.len() != mat.rows() {
        return Err(Error::LengthMismatch {
            expected: mat.rows(),
            found: ws.len(),
        });
    }
    match rule {
        SelectionRule::StepUpOnCombined {
            alpha,
            shape,
            adaptive_lambda,
            combiner,
        } => {
            let combined = mat.combined_rows(combiner.unwrap_or(method))?;
            let tc = threshold_collection(*alpha, ws, shape, *adaptive_lambda)?;
            Ok(step_up(&combined, &tc, &ws.penalty_v)?.indices)
        }
        SelectionRule::FixedThresholdOnCombined { threshold, combiner } => {
            let combined = mat.combined_rows(combiner.unwrap_or(method))?;
            Ok((0..mat.rows()).filter(|&i| combined[i] <= *threshold).collect())
        }
        SelectionRule::StepUpOnColumn { column, alpha, shape } => {
            if *column >= mat.cols() {
                return Err(Error::IndexOutOfRange {
                    index: *column,
                    len: mat.cols(),
                });
            }
            let tc = threshold_collection(*alpha, ws, shape, None)?;
            Ok(step_up(&mat.column(*column), &tc, &ws.penalty_v)?.indices)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBound {
    pub feature: usize,
    /// Lower bound on the number of studies with an effect.
    pub khat: usize,
    /// `w_i β(|S|_v) q / m`
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicabilityReport {
    pub selected_volume: f64,
    pub features: Vec<FeatureBound>,
}

impl ReplicabilityReport {
    pub fn selected(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.feature).collect()
    }

    pub fn khat(&self, feature: usize) -> Option<usize> {
        self.features
            .iter()
            .find(|f| f.feature == feature)
            .map(|f| f.khat)
    }
}

/// `k̂(i) = max{u : max(P_i^{1/n}, ..., P_i^{u/n}) <= w_i β(|S|_v) q / m}`.
pub fn khat_for_row(row: &[f64], method: CombiningMethod, threshold: f64) -> Result<usize> {
    let mut running = 0.0_f64;
    for u in 1..=row.len() {
        running = running.max(pc_pvalue(row, u, method)?);
        if running > threshold {
            return Ok(u - 1);
        }
    }
    Ok(row.len())
}

/// Step 2: sequential partial conjunction testing for each selected feature.
pub fn khat_bounds(
    mat: &PValueMatrix,
    selected: &[usize],
    method: CombiningMethod,
    ws: &WeightScheme,
    q: f64,
    beta: &ShapeFunction,
) -> Result<ReplicabilityReport> {
    if ws.len() != mat.rows() {
        return Err(Error::LengthMismatch {
            expected: mat.rows(),
            found: ws.len(),
        });
    }
    let tc = ThresholdCollection::new(q, ws.prior_w.clone(), beta.clone())?;
    let th = tc.resolve(&[])?;
    let volume = weighted_volume(selected, &ws.penalty_v)?;
    let features = selected
        .iter()
        .map(|&i| {
            let threshold = th.at(i, volume);
            Ok(FeatureBound {
                feature: i,
                khat: khat_for_row(mat.row(i), method, threshold)?,
                threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicabilityReport {
        selected_volume: volume,
        features,
    })
}

/// Both steps.
pub fn replicability_analysis(
    mat: &PValueMatrix,
    rule: &SelectionRule,
    method: CombiningMethod,
    ws: &WeightScheme,
    q: f64,
    beta: &ShapeFunction,
) -> Result<ReplicabilityReport> {
    let selected = select_features(mat, rule, method, ws)?;
    khat_bounds(mat, &selected, method, ws, q, beta)
}

/// `Σ_{i∈S} v_i 1(k̂(i) > k(i)) / |S|_v`, with `0/0 = 0`.
pub fn realized_replicability_error(report: &ReplicabilityReport, true_k: &[usize], penalty_v: &[f64]) -> f64 {
    let (mut bad, mut total) = (0.0, 0.0);
    for f in &report.features {
        total += penalty_v[f.feature];
        if f.khat > true_k[f.feature] {
            bad += penalty_v[f.feature];
        }
    }
    if total > 0.0 {
        bad / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_matrix(rows: &[&[f64]]) -> PValueMatrix {
        PValueMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matrix_validation() {
        assert!(PValueMatrix::new(0, 1, vec![]).is_err());
        assert!(PValueMatrix::new(1, 2, vec![0.1]).is_err());
        assert!(PValueMatrix::new(1, 1, vec![1.5]).is_err());
        assert!(PValueMatrix::from_rows(&[vec![0.1, 0.2], vec![0.3]]).is_err());
        let m = row_matrix(&[&[0.1, 0.2], &[0.3, 0.4]]);
        assert_eq!(m.column(1), vec![0.2, 0.4]);
        assert_eq!(m.with_row_filled(0, 0.0).row(0), &[0.0, 0.0]);
    }

    #[test]
    fn selection_examples() {
        let ws = WeightScheme::unit(4);
        let big = row_matrix(&[&[0.5], &[0.6], &[0.7], &[0.9]]);
        assert!(select_features(&big, &SelectionRule::bh(0.05), CombiningMethod::Simes, &ws)
            .unwrap()
            .is_empty());

        let one = row_matrix(&[&[0.01, 0.3]]);
        let s = select_features(&one, &SelectionRule::bh(0.05), CombiningMethod::Simes, &WeightScheme::unit(1));
        assert_eq!(s.unwrap(), vec![0]);

        // Rows whose Simes p-values are (0.002, 0.01, 0.2, 0.9).
        let mat = row_matrix(&[&[0.001, 0.9], &[0.005, 0.6], &[0.1, 0.8], &[0.45, 0.9]]);
        let combined = mat.combined_rows(CombiningMethod::Simes).unwrap();
        let want = [0.002, 0.01, 0.2, 0.9];
        for (a, b) in combined.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = select_features(&mat, &SelectionRule::bh(0.05), CombiningMethod::Simes, &ws).unwrap();
        assert_eq!(s, vec![0, 1]);

        let fixed = SelectionRule::FixedThresholdOnCombined {
            threshold: 0.005,
            combiner: None,
        };
        assert_eq!(select_features(&mat, &fixed, CombiningMethod::Simes, &ws).unwrap(), vec![0]);
        // Selection stays on the Simes rows when Step 2 uses Fisher.
        let on_simes = SelectionRule::bh_on(0.05, CombiningMethod::Simes);
        assert_eq!(select_features(&mat, &on_simes, CombiningMethod::Fisher, &ws).unwrap(), vec![0, 1]);

        let col = SelectionRule::StepUpOnColumn {
            column: 1,
            alpha: 0.05,
            shape: ShapeFunction::Identity,
        };
        assert!(select_features(&mat, &col, CombiningMethod::Simes, &ws).unwrap().is_empty());
        let col_oob = SelectionRule::StepUpOnColumn {
            column: 2,
            alpha: 0.05,
            shape: ShapeFunction::Identity,
        };
        assert!(select_features(&mat, &col_oob, CombiningMethod::Simes, &ws).is_err());
    }

    #[test]
    fn khat_examples() {
        // Bonferroni PC p-values of (0.001/3, 0.01/2, 0.2) are (0.001, 0.01, 0.2).
        let row = [0.001 / 3.0, 0.005, 0.2];
        for (u, want) in [(1, 0.001), (2, 0.01), (3, 0.2)] {
            let got = pc_pvalue(&row, u, CombiningMethod::Bonferroni).unwrap();
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(khat_for_row(&row, CombiningMethod::Bonferroni, 0.05).unwrap(), 2);
        assert_eq!(khat_for_row(&row, CombiningMethod::Bonferroni, 0.0005).unwrap(), 0);
        assert_eq!(khat_for_row(&row, CombiningMethod::Bonferroni, 1.0).unwrap(), 3);
    }

    #[test]
    fn matched_selection_gives_nontrivial_bounds() {
        let mat = row_matrix(&[&[0.001, 0.01, 0.7], &[0.004, 0.3, 0.9], &[0.5, 0.6, 0.7]]);
        let ws = WeightScheme::unit(3);
        let rep = replicability_analysis(
            &mat,
            &SelectionRule::bh(0.05),
            CombiningMethod::Simes,
            &ws,
            0.05,
            &ShapeFunction::Identity,
        )
        .unwrap();
        assert_eq!(rep.selected(), vec![0, 1]);
        assert!(rep.features.iter().all(|f| f.khat >= 1));
        assert_eq!(rep.khat(0), Some(2));
        assert_eq!(rep.khat(1), Some(1));
        assert!((rep.features[0].threshold - 0.05 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn error_examples() {
        let empty = ReplicabilityReport {
            selected_volume: 0.0,
            features: vec![],
        };
        assert_eq!(realized_replicability_error(&empty, &[0, 0], &[1.0, 1.0]), 0.0);
        let rep = ReplicabilityReport {
            selected_volume: 2.0,
            features: vec![
                FeatureBound { feature: 0, khat: 2, threshold: 0.1 },
                FeatureBound { feature: 1, khat: 3, threshold: 0.1 },
            ],
        };
        assert_eq!(realized_replicability_error(&rep, &[2, 2], &[1.0, 1.0]), 0.5);
        assert_eq!(realized_replicability_error(&rep, &[3, 3], &[1.0, 1.0]), 0.0);
    }
}
