//! Box representations and the IoU / GIoU kernels.
//!
//! Annotations live in normalized center form ([`BBox`]); overlap arithmetic
//! runs on corner form ([`CornerBox`]). Everything is `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum amount a box extent may spill outside `[0, 1]` before it is
/// rejected. Spill within the tolerance is clamped away.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;

/// Normalized center-format box: `(cx, cy, w, h)` as fractions of the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::with_tolerance(cx, cy, w, h, BOUNDARY_TOLERANCE)
    }

    /// Builds a box, clamping extents that overflow `[0, 1]` by at most
    /// `tolerance`.
    pub fn with_tolerance(cx: f64, cy: f64, w: f64, h: f64, tolerance: f64) -> Result<Self> {
        for (name, v) in [("cx", cx), ("cy", cy), ("w", w), ("h", h)] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("box {name} is not finite ({v})")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!(
                    "box {name} = {v} outside [0, 1]"
                )));
            }
        }
        let (x1, x2) = clamp_extent("x", cx, w, tolerance)?;
        let (y1, y2) = clamp_extent("y", cy, h, tolerance)?;
        if x1 == cx - w / 2.0 && x2 == cx + w / 2.0 && y1 == cy - h / 2.0 && y2 == cy + h / 2.0 {
            return Ok(BBox { cx, cy, w, h });
        }
        Ok(BBox {
            cx: (x1 + x2) / 2.0,
            cy: (y1 + y2) / 2.0,
            w: x2 - x1,
            h: y2 - y1,
        })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn to_corners(&self) -> CornerBox {
        to_corners(self)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// L1 distance over the four center-format coordinates.
    pub fn l1_distance(&self, other: &BBox) -> f64 {
        (self.cx - other.cx).abs()
            + (self.cy - other.cy).abs()
            + (self.w - other.w).abs()
            + (self.h - other.h).abs()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(&self.to_corners(), &other.to_corners())
    }

    pub fn giou(&self, other: &BBox) -> f64 {
        giou(&self.to_corners(), &other.to_corners())
    }
}

fn clamp_extent(axis: &str, center: f64, size: f64, tolerance: f64) -> Result<(f64, f64)> {
    let lo = center - size / 2.0;
    let hi = center + size / 2.0;
    if lo < -tolerance || hi > 1.0 + tolerance {
        return Err(Error::Validation(format!(
            "box {axis}-extent [{lo}, {hi}] overflows [0, 1] by more than {tolerance}"
        )));
    }
    Ok((lo.max(0.0), hi.min(1.0)))
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Corner-format box `(x1, y1, x2, y2)` with `x1 <= x2`, `y1 <= y2`.
///
/// Coordinates may be normalized or absolute; IoU and GIoU are scale free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl CornerBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!(
                "corner box ({x1}, {y1}, {x2}, {y2}) has a non-finite coordinate"
            )));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::Validation(format!(
                "corner box ({x1}, {y1}, {x2}, {y2}) is inverted"
            )));
        }
        Ok(CornerBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> CornerBox {
        CornerBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Multiplies every coordinate by `factor` (> 0).
    pub fn scale(&self, factor: f64) -> CornerBox {
        CornerBox {
            x1: self.x1 * factor,
            y1: self.y1 * factor,
            x2: self.x2 * factor,
            y2: self.y2 * factor,
        }
    }

    /// Overlap area with `other` (0 when disjoint).
    pub fn intersection_area(&self, other: &CornerBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest box containing both.
    pub fn enclosing(&self, other: &CornerBox) -> CornerBox {
        CornerBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }
}

pub fn to_corners(b: &BBox) -> CornerBox {
    CornerBox {
        x1: b.cx - b.w / 2.0,
        y1: b.cy - b.h / 2.0,
        x2: b.cx + b.w / 2.0,
        y2: b.cy + b.h / 2.0,
    }
}

/// Intersection over union. Two zero-area boxes have IoU 0.
pub fn iou(a: &CornerBox, b: &CornerBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized IoU: `IoU - (|C| - |A ∪ B|) / |C|` with `C` the enclosing box.
/// Falls back to plain IoU when the enclosing box has zero area.
pub fn giou(a: &CornerBox, b: &CornerBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let iou = if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    };
    let hull = a.enclosing(b).area();
    if hull <= 0.0 {
        return iou;
    }
    // Rounding can push the hull a hair below the union; the gap is never negative.
    let gap = (hull - union).max(0.0);
    iou - gap / hull
}
