//! Recall and RMSF1 under a relative tolerance.
//!
//! Values are compared one-to-one: a predicted value can recover at most one ground-truth
//! value. For tables, predicted columns are assigned to ground-truth columns by the
//! assignment that maximises the total number of matched cells, and within an assigned
//! column pair values are matched by maximum-cardinality bipartite matching. Non-numeric
//! cells are ignored in every count.

mod matching;

pub use matching::{max_bipartite_matching, max_weight_assignment};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: ground truth has no numeric values")]
    UndefinedMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative tolerance, inclusive.
    pub relative: f64,
    /// Absolute epsilon used when the ground-truth value is exactly zero.
    pub zero_epsilon: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            relative: 0.05,
            zero_epsilon: 1e-9,
        }
    }
}

impl Tolerance {
    pub fn relative(relative: f64) -> Self {
        assert!(relative > 0.0, "relative tolerance must be positive");
        Tolerance {
            relative,
            ..Tolerance::default()
        }
    }
}

/// How rows correspond inside assigned column pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowAlignment {
    /// Each column pair gets its own value matching.
    #[default]
    PerColumn,
    /// One row matching shared by all assigned column pairs (after column assignment).
    WholeRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(prediction cell, ground-truth cell)` pairs, one-to-one.
    pub matched_pairs: Vec<(CellRef, CellRef)>,
    pub matched: usize,
    pub pred_total: usize,
    pub gt_total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchResult {
    fn from_counts(matched_pairs: Vec<(CellRef, CellRef)>, pred_total: usize, gt_total: usize) -> Self {
        let matched = matched_pairs.len();
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(matched, pred_total);
        let recall = ratio(matched, gt_total);
        MatchResult {
            matched_pairs,
            matched,
            pred_total,
            gt_total,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }

    /// Score used for failed extractions: nothing matched.
    pub fn zero(gt_total: usize) -> Self {
        MatchResult::from_counts(Vec::new(), 0, gt_total)
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `|pred − gt| ≤ relative·|gt|`, or `|pred| ≤ epsilon` when `gt` is zero.
pub fn value_match(pred: f64, gt: f64, tol: &Tolerance) -> bool {
    if gt == 0.0 {
        pred.abs() <= tol.zero_epsilon
    } else {
        (pred - gt).abs() <= tol.relative * gt.abs()
    }
}

fn value_matching(pred: &[f64], gt: &[f64], tol: &Tolerance) -> Vec<(usize, usize)> {
    let adj: Vec<Vec<bool>> = pred
        .iter()
        .map(|p| gt.iter().map(|g| value_match(*p, *g, tol)).collect())
        .collect();
    max_bipartite_matching(&adj, gt.len())
}

/// Fraction of ground-truth values recovered by a one-to-one matching of predictions.
pub fn recall(pred_values: &[f64], gt_values: &[f64], tol: &Tolerance) -> Result<f64, MetricError> {
    if gt_values.is_empty() {
        return Err(MetricError::UndefinedMetric);
    }
    let matched = value_matching(pred_values, gt_values, tol).len();
    Ok(matched as f64 / gt_values.len() as f64)
}

/// Numeric entries of one column with their row indices.
fn numeric_entries(column: &[Option<f64>]) -> (Vec<usize>, Vec<f64>) {
    column
        .iter()
        .enumerate()
        .filter_map(|(r, v)| v.map(|v| (r, v)))
        .unzip()
}

/// Permutation-invariant RMSF1 with per-column row matching.
pub fn rmsf1(
    pred: &[Vec<Option<f64>>],
    gt: &[Vec<Option<f64>>],
    tol: &Tolerance,
) -> Result<MatchResult, MetricError> {
    rmsf1_with(pred, gt, tol, RowAlignment::PerColumn)
}

pub fn rmsf1_with(
    pred: &[Vec<Option<f64>>],
    gt: &[Vec<Option<f64>>],
    tol: &Tolerance,
    alignment: RowAlignment,
) -> Result<MatchResult, MetricError> {
    let pred_cols: Vec<(Vec<usize>, Vec<f64>)> = pred.iter().map(|c| numeric_entries(c)).collect();
    let gt_cols: Vec<(Vec<usize>, Vec<f64>)> = gt.iter().map(|c| numeric_entries(c)).collect();
    let pred_total: usize = pred_cols.iter().map(|c| c.1.len()).sum();
    let gt_total: usize = gt_cols.iter().map(|c| c.1.len()).sum();
    if gt_total == 0 {
        return Err(MetricError::UndefinedMetric);
    }

    let pair_matchings: Vec<Vec<Vec<(usize, usize)>>> = pred_cols
        .iter()
        .map(|(_, p)| gt_cols.iter().map(|(_, g)| value_matching(p, g, tol)).collect())
        .collect();
    let scores: Vec<Vec<i64>> = pair_matchings
        .iter()
        .map(|row| row.iter().map(|m| m.len() as i64).collect())
        .collect();
    let assignment = max_weight_assignment(&scores, gt_cols.len());

    let mut pairs = Vec::new();
    match alignment {
        RowAlignment::PerColumn => {
            for (pc, gc) in assignment.iter().enumerate() {
                let Some(gc) = *gc else { continue };
                for &(pi, gi) in &pair_matchings[pc][gc] {
                    pairs.push((
                        CellRef { row: pred_cols[pc].0[pi], col: pc },
                        CellRef { row: gt_cols[gc].0[gi], col: gc },
                    ));
                }
            }
        }
        RowAlignment::WholeRow => {
            let pred_rows = pred.iter().map(Vec::len).max().unwrap_or(0);
            let gt_rows = gt.iter().map(Vec::len).max().unwrap_or(0);
            let assigned: Vec<(usize, usize)> = assignment
                .iter()
                .enumerate()
                .filter_map(|(p, g)| g.map(|g| (p, g)))
                .collect();
            let cell = |m: &[Vec<Option<f64>>], c: usize, r: usize| m[c].get(r).copied().flatten();
            let row_scores: Vec<Vec<i64>> = (0..pred_rows)
                .map(|pr| {
                    (0..gt_rows)
                        .map(|gr| {
                            assigned
                                .iter()
                                .filter(|&&(pc, gc)| match (cell(pred, pc, pr), cell(gt, gc, gr)) {
                                    (Some(p), Some(g)) => value_match(p, g, tol),
                                    _ => false,
                                })
                                .count() as i64
                        })
                        .collect()
                })
                .collect();
            let row_assignment = max_weight_assignment(&row_scores, gt_rows);
            for (pr, gr) in row_assignment.iter().enumerate() {
                let Some(gr) = *gr else { continue };
                for &(pc, gc) in &assigned {
                    if let (Some(p), Some(g)) = (cell(pred, pc, pr), cell(gt, gc, gr)) {
                        if value_match(p, g, tol) {
                            pairs.push((CellRef { row: pr, col: pc }, CellRef { row: gr, col: gc }));
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    Ok(MatchResult::from_counts(pairs, pred_total, gt_total))
}

/// RMSF1 of each predicted column against a single ground-truth series; the best column
/// wins, ties going to the lowest column index. Matched pairs refer to the original
/// column index of the winner. A prediction with no columns scores zero.
pub fn best_column_rmsf1(
    pred: &[Vec<Option<f64>>],
    gt_series: &[f64],
    tol: &Tolerance,
) -> Result<MatchResult, MetricError> {
    if gt_series.is_empty() {
        return Err(MetricError::UndefinedMetric);
    }
    let gt = vec![gt_series.iter().copied().map(Some).collect::<Vec<_>>()];
    let mut best: Option<MatchResult> = None;
    for (c, column) in pred.iter().enumerate() {
        let mut result = rmsf1(std::slice::from_ref(column), &gt, tol)?;
        for (p, _) in &mut result.matched_pairs {
            p.col = c;
        }
        if best.as_ref().is_none_or(|b| result.f1 > b.f1) {
            best = Some(result);
        }
    }
    Ok(best.unwrap_or_else(|| MatchResult::zero(gt_series.len())))
}
