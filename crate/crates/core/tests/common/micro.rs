//! Random micro-datasets: at most 4 images, 6 ground-truth objects and 3
//! classes, with jittered, mislabeled and spurious detections. Confidences
//! come from a coarse grid so ties occur.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use strandline::{BBox, Detection, GroundTruth};

use super::oracle::{RawDet, RawGt};

pub struct Micro {
    pub n_classes: usize,
    pub dets: Vec<Detection>,
    pub gts: Vec<GroundTruth>,
}

fn random_box(rng: &mut StdRng) -> BBox {
    let w = rng.random_range(0.05..0.35);
    let h = rng.random_range(0.05..0.35);
    let cx = rng.random_range(w / 2.0..1.0 - w / 2.0);
    let cy = rng.random_range(h / 2.0..1.0 - h / 2.0);
    BBox::new(cx, cy, w, h).unwrap()
}

fn jitter(rng: &mut StdRng, b: &BBox) -> BBox {
    let s = rng.random_range(0.0..0.25);
    let w = (b.w() * (1.0 + rng.random_range(-s..s))).clamp(0.01, 0.9);
    let h = (b.h() * (1.0 + rng.random_range(-s..s))).clamp(0.01, 0.9);
    let cx = (b.cx() + rng.random_range(-s..s) * b.w()).clamp(w / 2.0, 1.0 - w / 2.0);
    let cy = (b.cy() + rng.random_range(-s..s) * b.h()).clamp(h / 2.0, 1.0 - h / 2.0);
    BBox::new(cx, cy, w, h).unwrap()
}

pub fn generate(rng: &mut StdRng) -> Micro {
    let n_images = rng.random_range(1..=4);
    let n_classes = rng.random_range(1..=3);
    let n_gts = rng.random_range(1..=6);
    let images: Vec<String> = (0..n_images).map(|i| format!("img{i}")).collect();
    let conf = |rng: &mut StdRng| rng.random_range(1..=9) as f64 / 10.0;

    let gts: Vec<GroundTruth> = (0..n_gts)
        .map(|_| GroundTruth {
            image_id: images[rng.random_range(0..n_images)].clone(),
            class_id: rng.random_range(0..n_classes),
            bbox: random_box(rng),
        })
        .collect();

    let mut dets = Vec::new();
    for g in &gts {
        for _ in 0..rng.random_range(0..=2) {
            let class_id = if rng.random_bool(0.2) { rng.random_range(0..n_classes) } else { g.class_id };
            dets.push(Detection {
                image_id: g.image_id.clone(),
                class_id,
                bbox: jitter(rng, &g.bbox),
                confidence: conf(rng),
            });
        }
    }
    for _ in 0..rng.random_range(0..=3) {
        dets.push(Detection {
            image_id: images[rng.random_range(0..n_images)].clone(),
            class_id: rng.random_range(0..n_classes),
            bbox: random_box(rng),
            confidence: conf(rng),
        });
    }
    dets.shuffle(rng);
    Micro { n_classes, dets, gts }
}

pub fn raw_dets(dets: &[Detection]) -> Vec<RawDet> {
    dets.iter()
        .map(|d| RawDet { image: d.image_id.clone(), class: d.class_id, b: d.bbox.to_array(), conf: d.confidence })
        .collect()
}

pub fn raw_gts(gts: &[GroundTruth]) -> Vec<RawGt> {
    gts.iter()
        .map(|g| RawGt { image: g.image_id.clone(), class: g.class_id, b: g.bbox.to_array() })
        .collect()
}

pub fn class_list(n: usize) -> strandline::ClassList {
    strandline::ClassList::new((0..n).map(|c| format!("class{c}")).collect()).unwrap()
}
