//! Minimum-cost bipartite matching between predictions and ground truths.
//!
//! [`hungarian`] is the shortest-augmenting-path form of Kuhn–Munkres with
//! row/column potentials, O(n³) on the padded square. It works directly on
//! negative costs. Rows are inserted in index order and column scans take the
//! lowest index on ties, so the returned pairing is reproducible.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::losses::{focal_cls_loss, LossWeights};

/// Dense row-major cost matrix: rows are predictions, columns ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "cost matrix must be at least 1x1 (got {rows}x{cols})"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::Validation(format!(
                "cost matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if let Some(idx) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCost {
                row: idx / cols,
                col: idx % cols,
                value: entries[idx],
            });
        }
        Ok(CostMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::Validation(format!(
                "cost matrix row {bad} has {} entries, expected {m}",
                rows[bad].len()
            )));
        }
        Self::new(n, m, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Matched `(prediction, ground truth)` index pairs, sorted by prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    /// Sum of matched entries, accumulated in prediction order.
    pub total_cost: f64,
}

pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let n = cost.rows.max(cost.cols);
    let pad = cost.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let at = |i: usize, j: usize| -> f64 {
        if i < cost.rows && j < cost.cols {
            cost.get(i, j)
        } else {
            pad
        }
    };

    // 1-based potentials; column 0 is the virtual root of each search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = at(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![usize::MAX; n];
    for j in 1..=n {
        if owner[j] > 0 {
            col_of_row[owner[j] - 1] = j - 1;
        }
    }
    let pairs: Vec<(usize, usize)> = col_of_row
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < cost.rows && j < cost.cols)
        .collect();
    let total_cost = pairs.iter().map(|&(i, j)| cost.get(i, j)).sum();
    Assignment { pairs, total_cost }
}

/// Matching cost of one prediction against one ground truth:
/// weighted focal term + weighted L1 + weighted `1 - GIoU`.
///
/// `pred_prob` is the probability the prediction assigns to the ground
/// truth's class.
pub fn pair_cost(pred_prob: f64, pred_box: &BBox, gt_box: &BBox, weights: &LossWeights) -> Result<f64> {
    let cls = focal_cls_loss(pred_prob, weights)?;
    let l1 = pred_box.l1_distance(gt_box);
    let giou = 1.0 - pred_box.giou(gt_box);
    Ok(weights.lambda_cls * cls + weights.lambda_bbox * l1 + weights.lambda_giou * giou)
}

/// A decoder output slot: class probabilities plus a box.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, Serialize)]
pub struct QueryPrediction {
    pub probs: Vec<f64>,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// A ground-truth target for matching.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, Serialize)]
pub struct MatchTarget {
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

pub fn build_cost_matrix(
    preds: &[QueryPrediction],
    gts: &[MatchTarget],
    weights: &LossWeights,
) -> Result<CostMatrix> {
    if preds.is_empty() || gts.is_empty() {
        return Err(Error::Validation(format!(
            "cost matrix needs at least one prediction and one ground truth (got {} and {})",
            preds.len(),
            gts.len()
        )));
    }
    let mut entries = Vec::with_capacity(preds.len() * gts.len());
    for (i, pred) in preds.iter().enumerate() {
        for (j, gt) in gts.iter().enumerate() {
            let p = *pred.probs.get(gt.class_id).ok_or_else(|| {
                Error::Validation(format!(
                    "ground truth {j} has class {} but prediction {i} carries {} probabilities",
                    gt.class_id,
                    pred.probs.len()
                ))
            })?;
            entries.push(pair_cost(p, &pred.bbox, &gt.bbox, weights)?);
        }
    }
    CostMatrix::new(preds.len(), gts.len(), entries)
}
