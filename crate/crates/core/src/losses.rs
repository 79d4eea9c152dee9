//! Set-prediction loss terms: focal classification, L1 box regression,
//! GIoU, and the combined training loss over matched pairs.
//!
//! The combined loss comes in two modes. [`LossMode::Verbatim`] evaluates the
//! printed formula term by term, sign quirks included: its box term sums raw
//! GIoU and its classification term carries no leading minus.
//! [`LossMode::Corrected`] uses `1 - GIoU` and an IoU-aware binary cross
//! entropy (one-hot target, IoU-scaled positive channel), which is what a
//! trainer would minimize.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Default clamp applied to file-loaded probabilities before taking logs.
pub const DEFAULT_PROBABILITY_EPS: f64 = 1e-12;

/// Focal parameters and term weights shared by the matching cost and the
/// training loss. `lambda_bbox` weights the L1 term in both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda_cls: f64,
    pub lambda_bbox: f64,
    pub lambda_giou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.25,
            gamma: 2.0,
            lambda_cls: 1.0,
            lambda_bbox: 5.0,
            lambda_giou: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma = {} must be >= 0", self.gamma)));
        }
        for (name, v) in [
            ("lambda_cls", self.lambda_cls),
            ("lambda_bbox", self.lambda_bbox),
            ("lambda_giou", self.lambda_giou),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Verbatim,
    Corrected,
}

impl LossMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::Verbatim => "verbatim",
            LossMode::Corrected => "corrected",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(LossMode::Verbatim),
            "corrected" => Ok(LossMode::Corrected),
            other => Err(Error::Usage(format!(
                "unknown loss mode `{other}` (expected verbatim or corrected)"
            ))),
        }
    }
}

fn check_open_unit(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {p} must lie strictly inside (0, 1)")))
    }
}

/// Clamps a loaded probability into `[eps, 1 - eps]`.
///
/// Values outside `[0, 1]` (or NaN) are still rejected; only rounded
/// endpoints are pulled inward.
pub fn guard_probability(p: f64, eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::Validation(format!("probability clamp {eps} outside [0, 0.5)")));
    }
    Ok(p.clamp(eps, 1.0 - eps))
}

/// Focal classification cost, evaluated as printed:
/// `α(1-p)^γ(-ln p) - (1-α)p^γ(-ln(1-p))`.
///
/// The second term is subtracted, so the value goes negative once the
/// background term dominates.
pub fn focal_cls_loss(p_hat: f64, w: &LossWeights) -> Result<f64> {
    check_open_unit("p_hat", p_hat)?;
    let pos = w.alpha * (1.0 - p_hat).powf(w.gamma) * -p_hat.ln();
    let neg = (1.0 - w.alpha) * p_hat.powf(w.gamma) * -(1.0 - p_hat).ln();
    Ok(pos - neg)
}

/// Sum of per-pair L1 distances over `(cx, cy, w, h)`.
pub fn l1_box_loss(pred: &[BBox], gt: &[BBox]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Validation(format!(
            "l1_box_loss: {} predicted boxes vs {} ground-truth boxes",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Validation("l1_box_loss: empty pair list".into()));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| p.l1_distance(g)).sum())
}

/// `1 - GIoU(pred, gt)`, in `[0, 2)`.
pub fn giou_loss(pred: &BBox, gt: &BBox) -> f64 {
    1.0 - pred.giou(gt)
}

/// One prediction paired with its assigned ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred_box: BBox,
    pub gt_box: BBox,
    /// Per-class predicted probabilities.
    pub pred_probs: Vec<f64>,
    pub gt_class: usize,
    /// Target quality: IoU between the two boxes.
    pub q: f64,
}

impl MatchedPair {
    pub fn new(
        pred_box: BBox,
        gt_box: BBox,
        pred_probs: Vec<f64>,
        gt_class: usize,
        q: f64,
    ) -> Result<Self> {
        let pair = MatchedPair {
            pred_box,
            gt_box,
            pred_probs,
            gt_class,
            q,
        };
        pair.validate()?;
        Ok(pair)
    }

    /// Pair whose target quality is the IoU of the two boxes.
    pub fn with_iou_target(
        pred_box: BBox,
        gt_box: BBox,
        pred_probs: Vec<f64>,
        gt_class: usize,
    ) -> Result<Self> {
        let q = pred_box.iou(&gt_box);
        Self::new(pred_box, gt_box, pred_probs, gt_class, q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gt_class >= self.pred_probs.len() {
            return Err(Error::Validation(format!(
                "gt_class {} out of range for {} class probabilities",
                self.gt_class,
                self.pred_probs.len()
            )));
        }
        for (c, &p) in self.pred_probs.iter().enumerate() {
            check_open_unit(&format!("pred_probs[{c}]"), p)?;
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Validation(format!("q = {} outside [0, 1]", self.q)));
        }
        Ok(())
    }
}

/// The three weighted, `1/N`-normalized terms of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub mode: LossMode,
    pub pairs: usize,
    pub giou_term: f64,
    pub l1_term: f64,
    pub cls_term: f64,
    pub total: f64,
}

/// Classification term for one pair, before the `λ_cls / N` factor.
fn cls_sum(pair: &MatchedPair, w: &LossWeights, mode: LossMode) -> f64 {
    pair.pred_probs
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let on_target = c == pair.gt_class;
            let q = if on_target { pair.q } else { 0.0 };
            let log_lik = q * p.ln() + (1.0 - q) * (1.0 - p).ln();
            match mode {
                // Unhatted p in the weight is read as the prediction itself.
                LossMode::Verbatim => log_lik * (w.alpha * p.powf(w.gamma) * (1.0 - p) + q * p),
                LossMode::Corrected => {
                    let y = if on_target { 1.0 } else { 0.0 };
                    -log_lik * (w.alpha * p.powf(w.gamma) * (1.0 - y) + q * y)
                }
            }
        })
        .sum()
}

pub fn total_loss(pairs: &[MatchedPair], w: &LossWeights, mode: LossMode) -> Result<LossBreakdown> {
    if pairs.is_empty() {
        return Err(Error::Validation("total_loss: no matched pairs".into()));
    }
    w.validate()?;
    for pair in pairs {
        pair.validate()?;
    }
    let n = pairs.len() as f64;

    let giou_sum: f64 = pairs
        .iter()
        .map(|p| match mode {
            LossMode::Verbatim => p.pred_box.giou(&p.gt_box),
            LossMode::Corrected => giou_loss(&p.pred_box, &p.gt_box),
        })
        .sum();
    let l1_sum: f64 = pairs.iter().map(|p| p.pred_box.l1_distance(&p.gt_box)).sum();
    let cls: f64 = pairs.iter().map(|p| cls_sum(p, w, mode)).sum();

    let giou_term = w.lambda_giou / n * giou_sum;
    let l1_term = w.lambda_bbox / n * l1_sum;
    let cls_term = w.lambda_cls / n * cls;
    Ok(LossBreakdown {
        mode,
        pairs: pairs.len(),
        giou_term,
        l1_term,
        cls_term,
        total: giou_term + l1_term + cls_term,
    })
}
