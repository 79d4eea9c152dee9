//! Detection evaluation: greedy COCO-style matching, precision/recall curves,
//! average precision, and the background-aware confusion matrix.
//!
//! Ordering contract. Within an image, detections are ranked by confidence
//! (descending), then by box coordinates `(cx, cy, w, h)` ascending, then by
//! input position. Across images, ties in confidence are broken by image id.
//! The ranking depends only on detection content, so results do not change
//! when images or per-image detections are reordered.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassList;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Label used for the synthetic confusion-matrix row and column.
pub const BACKGROUND: &str = "background";

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// How the precision envelope is integrated over recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Mean of the envelope sampled at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Coco101,
    /// Exact area under the envelope step function.
    Continuous,
}

impl Interpolation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Interpolation::Coco101 => "coco101",
            Interpolation::Continuous => "continuous",
        }
    }
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coco101" | "101" => Ok(Interpolation::Coco101),
            "continuous" | "all-point" => Ok(Interpolation::Continuous),
            other => Err(Error::Usage(format!(
                "unknown interpolation `{other}` (expected coco101 or continuous)"
            ))),
        }
    }
}

/// One ranked detection after matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredDetection {
    pub confidence: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchOutcome {
    /// Detections in ranking order (images by id, then in-image rank).
    pub detections: Vec<ScoredDetection>,
    pub unmatched_gt: usize,
}

fn rank_cmp(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.bbox.cx().total_cmp(&b.bbox.cx()))
        .then_with(|| a.bbox.cy().total_cmp(&b.bbox.cy()))
        .then_with(|| a.bbox.w().total_cmp(&b.bbox.w()))
        .then_with(|| a.bbox.h().total_cmp(&b.bbox.h()))
}

/// Indices of `dets` in ranking order (stable on full ties).
fn ranked<'a>(dets: &[&'a Detection]) -> Vec<&'a Detection> {
    let mut out = dets.to_vec();
    out.sort_by(|a, b| rank_cmp(a, b));
    out
}

/// Greedy claim: each detection, in rank order, takes the unclaimed ground
/// truth with the highest IoU at or above `threshold` (lowest index on ties).
fn greedy_claim(ious: &[Vec<f64>], gt_count: usize, threshold: f64) -> (Vec<bool>, usize) {
    let mut claimed = vec![false; gt_count];
    let flags = ious
        .iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in row.iter().enumerate() {
                if claimed[g] || v < threshold {
                    continue;
                }
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    claimed[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    let missed = claimed.iter().filter(|c| !**c).count();
    (flags, missed)
}

fn group_by_image<T>(items: &[T], image_of: impl Fn(&T) -> &str) -> BTreeMap<&str, Vec<&T>> {
    let mut map: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for it in items {
        map.entry(image_of(it)).or_default().push(it);
    }
    map
}

/// Matches detections of `class_id` to ground truths of the same class,
/// image by image.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    class_id: usize,
    iou_threshold: f64,
) -> Result<MatchOutcome> {
    check_threshold("iou_threshold", iou_threshold)?;
    let dets: Vec<Detection> = dets.iter().filter(|d| d.class_id == class_id).cloned().collect();
    let gts: Vec<GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).cloned().collect();
    let det_map = group_by_image(&dets, |d| &d.image_id);
    let gt_map = group_by_image(&gts, |g| &g.image_id);

    let mut images: Vec<&str> = det_map.keys().chain(gt_map.keys()).copied().collect();
    images.sort_unstable();
    images.dedup();

    let mut out = MatchOutcome {
        detections: Vec::new(),
        unmatched_gt: 0,
    };
    for img in images {
        let img_dets = det_map.get(img).map(|v| ranked(v)).unwrap_or_default();
        let img_gts = gt_map.get(img).cloned().unwrap_or_default();
        let ious = iou_table(&img_dets, &img_gts);
        let (flags, missed) = greedy_claim(&ious, img_gts.len(), iou_threshold);
        out.unmatched_gt += missed;
        out.detections.extend(img_dets.iter().zip(flags).map(|(d, tp)| ScoredDetection {
            confidence: d.confidence,
            true_positive: tp,
        }));
    }
    Ok(out)
}

fn iou_table(dets: &[&Detection], gts: &[&GroundTruth]) -> Vec<Vec<f64>> {
    let gt_corners: Vec<_> = gts.iter().map(|g| g.bbox.to_corners()).collect();
    dets.iter()
        .map(|d| {
            let dc = d.bbox.to_corners();
            gt_corners.iter().map(|gc| crate::geometry::iou(&dc, gc)).collect()
        })
        .collect()
}

fn check_threshold(name: &str, t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} = {t} must lie in (0, 1)")))
    }
}

/// Cumulative precision and recall after each ranked detection.
pub fn precision_recall(tp_flags: &[bool], total_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut recall = Vec::with_capacity(tp_flags.len());
    for (k, &flag) in tp_flags.iter().enumerate() {
        if flag {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }
    (precision, recall)
}

/// Average precision of a ranked TP/FP sequence against `total_gt` targets.
pub fn average_precision(tp_flags: &[bool], total_gt: usize, mode: Interpolation) -> Result<f64> {
    if total_gt == 0 {
        return Err(Error::Usage(
            "average precision is undefined for a class with no ground truth".into(),
        ));
    }
    let (mut precision, recall) = precision_recall(tp_flags, total_gt);
    // Envelope: precision at rank k becomes the best precision at any rank >= k.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let ap = match mode {
        Interpolation::Coco101 => {
            let sum: f64 = (0..=100)
                .map(|i| {
                    let r = i as f64 / 100.0;
                    let k = recall.partition_point(|&x| x < r);
                    precision.get(k).copied().unwrap_or(0.0)
                })
                .sum();
            sum / 101.0
        }
        Interpolation::Continuous => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (p, r) in precision.iter().zip(&recall) {
                area += (r - prev) * p;
                prev = *r;
            }
            area
        }
    };
    Ok(ap.clamp(0.0, 1.0))
}

/// A point on the PR curve at a confidence cutoff (every detection with
/// confidence >= `confidence` kept).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        let s = self.precision + self.recall;
        if s > 0.0 {
            2.0 * self.precision * self.recall / s
        } else {
            0.0
        }
    }
}

/// Curve sampled at each distinct confidence (the last rank of each tie
/// group).
pub fn pr_curve(ranked: &[ScoredDetection], total_gt: usize) -> Vec<PrPoint> {
    let flags: Vec<bool> = ranked.iter().map(|d| d.true_positive).collect();
    let (precision, recall) = precision_recall(&flags, total_gt);
    (0..ranked.len())
        .filter(|&k| k + 1 == ranked.len() || ranked[k + 1].confidence != ranked[k].confidence)
        .map(|k| PrPoint {
            confidence: ranked[k].confidence,
            precision: precision[k],
            recall: recall[k],
        })
        .collect()
}

/// Highest-F1 point; the highest confidence wins ties. `None` when F1 is
/// zero everywhere.
pub fn max_f1_point(curve: &[PrPoint]) -> Option<PrPoint> {
    let mut best: Option<PrPoint> = None;
    for p in curve {
        if p.f1() > best.map_or(0.0, |b| b.f1()) {
            best = Some(*p);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub name: String,
    pub instances: usize,
    pub detections: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap50: f64,
    pub ap50_95: f64,
    /// Confidence cutoff at which `precision` and `recall` were read.
    pub operating_confidence: Option<f64>,
    /// Curve at IoU 0.5, one point per distinct confidence.
    #[serde(skip_serializing)]
    pub pr_curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub interpolation: Interpolation,
    pub images: usize,
    pub per_class: Vec<ClassMetrics>,
    pub aggregate: AggregateMetrics,
    pub evaluated_classes: Vec<String>,
    pub skipped_classes: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub interpolation: Interpolation,
}

/// Per (image, class) matching at every COCO threshold.
struct ImageClassResult {
    class_id: usize,
    confidences: Vec<f64>,
    /// `flags[t][k]`: detection k is a TP at threshold t.
    flags: Vec<Vec<bool>>,
}

fn validate_classes(dets: &[Detection], gts: &[GroundTruth], classes: &ClassList) -> Result<()> {
    let n = classes.len();
    if let Some(g) = gts.iter().find(|g| g.class_id >= n) {
        return Err(Error::Validation(format!(
            "ground truth in image `{}` has class {} but only {n} classes are defined",
            g.image_id, g.class_id
        )));
    }
    if let Some(d) = dets.iter().find(|d| d.class_id >= n) {
        return Err(Error::Validation(format!(
            "detection in image `{}` has class {} but only {n} classes are defined",
            d.image_id, d.class_id
        )));
    }
    if let Some(d) = dets.iter().find(|d| !(0.0..=1.0).contains(&d.confidence)) {
        return Err(Error::Validation(format!(
            "detection in image `{}` has confidence {} outside [0, 1]",
            d.image_id, d.confidence
        )));
    }
    Ok(())
}

pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    classes: &ClassList,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if classes.is_empty() {
        return Err(Error::Usage("class list is empty".into()));
    }
    if gts.is_empty() {
        return Err(Error::Usage("no ground truth to evaluate against".into()));
    }
    validate_classes(dets, gts, classes)?;

    let thresholds = coco_iou_thresholds();
    let det_map = group_by_image(dets, |d| &d.image_id);
    let gt_map = group_by_image(gts, |g| &g.image_id);
    let mut images: Vec<&str> = det_map.keys().chain(gt_map.keys()).copied().collect();
    images.sort_unstable();
    images.dedup();

    let per_image: Vec<(&str, Vec<ImageClassResult>)> = images
        .par_iter()
        .map(|&img| {
            let img_dets = det_map.get(img).map(Vec::as_slice).unwrap_or_default();
            let img_gts = gt_map.get(img).map(Vec::as_slice).unwrap_or_default();
            let results = (0..classes.len())
                .filter_map(|c| {
                    let cd: Vec<&Detection> = img_dets.iter().copied().filter(|d| d.class_id == c).collect();
                    if cd.is_empty() {
                        return None;
                    }
                    let cd = ranked(&cd);
                    let cg: Vec<&GroundTruth> = img_gts.iter().copied().filter(|g| g.class_id == c).collect();
                    let ious = iou_table(&cd, &cg);
                    let flags = thresholds
                        .iter()
                        .map(|&t| greedy_claim(&ious, cg.len(), t).0)
                        .collect();
                    Some(ImageClassResult {
                        class_id: c,
                        confidences: cd.iter().map(|d| d.confidence).collect(),
                        flags,
                    })
                })
                .collect();
            (img, results)
        })
        .collect();

    let mut instances = vec![0usize; classes.len()];
    for g in gts {
        instances[g.class_id] += 1;
    }

    // Per class: (confidence, image, in-image rank, flags per threshold).
    type Ranked<'a> = (f64, &'a str, usize, Vec<bool>);
    let mut pooled: Vec<Vec<Ranked>> = vec![Vec::new(); classes.len()];
    for (img, results) in &per_image {
        for r in results {
            for (k, &conf) in r.confidences.iter().enumerate() {
                let flags = r.flags.iter().map(|f| f[k]).collect();
                pooled[r.class_id].push((conf, img, k, flags));
            }
        }
    }

    let mut per_class = Vec::new();
    let mut evaluated = Vec::new();
    let mut skipped = Vec::new();
    for (c, mut entries) in pooled.into_iter().enumerate() {
        let name = classes.name(c).to_string();
        if instances[c] == 0 {
            skipped.push(name);
            continue;
        }
        entries.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then_with(|| a.2.cmp(&b.2)));
        let mut aps = Vec::with_capacity(thresholds.len());
        for t in 0..thresholds.len() {
            let flags: Vec<bool> = entries.iter().map(|e| e.3[t]).collect();
            aps.push(average_precision(&flags, instances[c], options.interpolation)?);
        }
        let ranked: Vec<ScoredDetection> = entries
            .iter()
            .map(|e| ScoredDetection {
                confidence: e.0,
                true_positive: e.3[0],
            })
            .collect();
        let curve = pr_curve(&ranked, instances[c]);
        let op = max_f1_point(&curve);
        per_class.push(ClassMetrics {
            class_id: c,
            name: name.clone(),
            instances: instances[c],
            detections: entries.len(),
            precision: op.map_or(0.0, |p| p.precision),
            recall: op.map_or(0.0, |p| p.recall),
            ap50: aps[0],
            ap50_95: aps.iter().sum::<f64>() / aps.len() as f64,
            operating_confidence: op.map(|p| p.confidence),
            pr_curve: curve,
        });
        evaluated.push(name);
    }

    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let aggregate = AggregateMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        map50: mean(|m| m.ap50),
        map50_95: mean(|m| m.ap50_95),
    };
    Ok(EvalReport {
        interpolation: options.interpolation,
        images: images.len(),
        per_class,
        aggregate,
        evaluated_classes: evaluated,
        skipped_classes: skipped,
    })
}

/// Counts indexed `[true][predicted]`; the last index on both axes is
/// background.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn background_index(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each row divided by its sum; all-zero rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

/// Class-agnostic matching by IoU; cells count `(gt class, predicted class)`.
pub fn confusion_matrix(
    dets: &[Detection],
    gts: &[GroundTruth],
    classes: &ClassList,
    confidence_threshold: f64,
    iou_threshold: f64,
) -> Result<ConfusionMatrix> {
    check_threshold("confidence_threshold", confidence_threshold)?;
    check_threshold("iou_threshold", iou_threshold)?;
    validate_classes(dets, gts, classes)?;

    let n = classes.len();
    let bg = n;
    let mut counts = vec![vec![0u64; n + 1]; n + 1];
    let kept: Vec<Detection> = dets
        .iter()
        .filter(|d| d.confidence >= confidence_threshold)
        .cloned()
        .collect();
    let det_map = group_by_image(&kept, |d| &d.image_id);
    let gt_map = group_by_image(gts, |g| &g.image_id);
    let mut images: Vec<&str> = det_map.keys().chain(gt_map.keys()).copied().collect();
    images.sort_unstable();
    images.dedup();

    for img in images {
        let img_dets = det_map.get(img).map(|v| ranked(v)).unwrap_or_default();
        let img_gts = gt_map.get(img).cloned().unwrap_or_default();
        let ious = iou_table(&img_dets, &img_gts);
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (d, row) in ious.iter().enumerate() {
            for (g, &v) in row.iter().enumerate() {
                if v >= iou_threshold {
                    candidates.push((v, g, d));
                }
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
        let mut gt_used = vec![false; img_gts.len()];
        let mut det_used = vec![false; img_dets.len()];
        for (_, g, d) in candidates {
            if gt_used[g] || det_used[d] {
                continue;
            }
            gt_used[g] = true;
            det_used[d] = true;
            counts[img_gts[g].class_id][img_dets[d].class_id] += 1;
        }
        for (g, used) in gt_used.iter().enumerate() {
            if !used {
                counts[img_gts[g].class_id][bg] += 1;
            }
        }
        for (d, used) in det_used.iter().enumerate() {
            if !used {
                counts[bg][img_dets[d].class_id] += 1;
            }
        }
    }

    let mut labels: Vec<String> = classes.names().to_vec();
    labels.push(BACKGROUND.to_string());
    Ok(ConfusionMatrix { labels, counts })
}
