//! Naive reference implementations used as test oracles.
//!
//! Nothing here calls into the library's geometry or metric code; boxes are
//! plain `[cx, cy, w, h]` arrays and every quantity is recomputed from
//! scratch with the most direct (quadratic) method available.

#![allow(dead_code)]

use std::collections::BTreeSet;

pub type RawBox = [f64; 4];

#[derive(Debug, Clone)]
pub struct RawDet {
    pub image: String,
    pub class: usize,
    pub b: RawBox,
    pub conf: f64,
}

#[derive(Debug, Clone)]
pub struct RawGt {
    pub image: String,
    pub class: usize,
    pub b: RawBox,
}

pub fn naive_iou(a: RawBox, b: RawBox) -> f64 {
    let (ax1, ax2, ay1, ay2) = (a[0] - a[2] / 2.0, a[0] + a[2] / 2.0, a[1] - a[3] / 2.0, a[1] + a[3] / 2.0);
    let (bx1, bx2, by1, by2) = (b[0] - b[2] / 2.0, b[0] + b[2] / 2.0, b[1] - b[3] / 2.0, b[1] + b[3] / 2.0);
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Documented ranking key: confidence desc, then cx, cy, w, h ascending,
/// then input order.
fn rank_key_less(a: &RawDet, b: &RawDet) -> std::cmp::Ordering {
    b.conf
        .total_cmp(&a.conf)
        .then(a.b[0].total_cmp(&b.b[0]))
        .then(a.b[1].total_cmp(&b.b[1]))
        .then(a.b[2].total_cmp(&b.b[2]))
        .then(a.b[3].total_cmp(&b.b[3]))
}

fn images_of(dets: &[RawDet], gts: &[RawGt]) -> Vec<String> {
    let set: BTreeSet<String> = dets.iter().map(|d| d.image.clone()).chain(gts.iter().map(|g| g.image.clone())).collect();
    set.into_iter().collect()
}

/// Per image (sorted by id): ranked confidences and TP flags for `class`.
pub fn naive_image_flags(dets: &[RawDet], gts: &[RawGt], class: usize, thr: f64) -> Vec<(String, Vec<(f64, bool)>, usize)> {
    let mut out = Vec::new();
    for img in images_of(dets, gts) {
        let mut ds: Vec<&RawDet> = dets.iter().filter(|d| d.image == img && d.class == class).collect();
        // Stable insertion sort, deliberately not the library's sort.
        for i in 1..ds.len() {
            let mut j = i;
            while j > 0 && rank_key_less(ds[j], ds[j - 1]) == std::cmp::Ordering::Less {
                ds.swap(j, j - 1);
                j -= 1;
            }
        }
        let gs: Vec<&RawGt> = gts.iter().filter(|g| g.image == img && g.class == class).collect();
        let mut taken = vec![false; gs.len()];
        let mut flags = Vec::new();
        for d in &ds {
            let mut best = None;
            let mut best_iou = -1.0;
            for (k, g) in gs.iter().enumerate() {
                let v = naive_iou(d.b, g.b);
                if !taken[k] && v >= thr && v > best_iou {
                    best = Some(k);
                    best_iou = v;
                }
            }
            if let Some(k) = best {
                taken[k] = true;
            }
            flags.push((d.conf, best.is_some()));
        }
        let missed = taken.iter().filter(|t| !**t).count();
        out.push((img, flags, missed));
    }
    out
}

/// Globally ranked TP flags for `class` at `thr`: confidence desc, image id,
/// in-image rank.
pub fn naive_pooled_flags(dets: &[RawDet], gts: &[RawGt], class: usize, thr: f64) -> Vec<bool> {
    let mut pooled: Vec<(f64, String, usize, bool)> = Vec::new();
    for (img, flags, _) in naive_image_flags(dets, gts, class, thr) {
        for (rank, (conf, tp)) in flags.into_iter().enumerate() {
            pooled.push((conf, img.clone(), rank, tp));
        }
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    pooled.into_iter().map(|p| p.3).collect()
}

fn naive_curve(flags: &[bool], total_gt: usize) -> Vec<(f64, f64)> {
    (0..flags.len())
        .map(|k| {
            let tp = flags[..=k].iter().filter(|f| **f).count() as f64;
            (tp / (k + 1) as f64, tp / total_gt as f64)
        })
        .collect()
}

/// 101-point AP by direct search: at each recall level r, the best precision
/// among points reaching recall >= r.
pub fn naive_ap101(flags: &[bool], total_gt: usize) -> f64 {
    let curve = naive_curve(flags, total_gt);
    let mut sum = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let best = curve
            .iter()
            .filter(|(_, rec)| *rec >= r)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
        sum += best;
    }
    sum / 101.0
}

/// Area under the envelope: for each distinct recall level, width times the
/// best precision among points at or beyond it.
pub fn naive_ap_continuous(flags: &[bool], total_gt: usize) -> f64 {
    let curve = naive_curve(flags, total_gt);
    let mut levels: Vec<f64> = curve.iter().map(|c| c.1).filter(|r| *r > 0.0).collect();
    levels.dedup();
    let mut prev = 0.0;
    let mut area = 0.0;
    for r in levels {
        let best = curve
            .iter()
            .filter(|(_, rec)| *rec >= r)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
        area += (r - prev) * best;
        prev = r;
    }
    area
}

pub struct NaiveClass {
    pub class: usize,
    pub ap50: f64,
    pub ap50_95: f64,
}

/// Reference AP@50 and AP@50-95 for each class that has ground truth.
pub fn naive_evaluate(dets: &[RawDet], gts: &[RawGt], n_classes: usize, continuous: bool) -> Vec<NaiveClass> {
    let ap = |f: &[bool], n: usize| if continuous { naive_ap_continuous(f, n) } else { naive_ap101(f, n) };
    let mut out = Vec::new();
    for c in 0..n_classes {
        let total = gts.iter().filter(|g| g.class == c).count();
        if total == 0 {
            continue;
        }
        let aps: Vec<f64> = (0..10)
            .map(|i| {
                let thr = (50 + 5 * i) as f64 / 100.0;
                ap(&naive_pooled_flags(dets, gts, c, thr), total)
            })
            .collect();
        out.push(NaiveClass {
            class: c,
            ap50: aps[0],
            ap50_95: aps.iter().sum::<f64>() / 10.0,
        });
    }
    out
}

/// Minimum over all injective maps from the smaller side into the larger.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost[0].len();
    let transpose = n > m;
    let (rows, cols) = if transpose { (m, n) } else { (n, m) };
    let at = |i: usize, j: usize| if transpose { cost[j][i] } else { cost[i][j] };
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(rows);
    let mut used = vec![false; cols];
    fn rec(
        i: usize,
        rows: usize,
        cols: usize,
        chosen: &mut Vec<usize>,
        used: &mut [bool],
        at: &dyn Fn(usize, usize) -> f64,
        best: &mut f64,
        transpose: bool,
    ) {
        if i == rows {
            // Sum in prediction-index order, as the library reports totals.
            let total = if transpose {
                let mut pairs: Vec<(usize, usize)> = chosen.iter().enumerate().map(|(g, &p)| (p, g)).collect();
                pairs.sort();
                pairs.iter().map(|&(p, g)| at(g, p)).sum()
            } else {
                chosen.iter().enumerate().map(|(r, &c)| at(r, c)).sum::<f64>()
            };
            if total < *best {
                *best = total;
            }
            return;
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                chosen.push(c);
                rec(i + 1, rows, cols, chosen, used, at, best, transpose);
                chosen.pop();
                used[c] = false;
            }
        }
    }
    rec(0, rows, cols, &mut chosen, &mut used, &at, &mut best, transpose);
    best
}
