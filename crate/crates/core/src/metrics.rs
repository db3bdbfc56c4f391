//! Region and boundary scores of a predicted mask against ground truth.

use serde::{Deserialize, Serialize};

use crate::image::check_dims;
use crate::{BinaryMask, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub iou: f64,
    pub f2: f64,
    pub error_rate: f64,
    pub boundary_precision: f64,
    pub boundary_recall: f64,
}

impl SegmentationScores {
    pub const FIELDS: [&'static str; 5] = ["iou", "f2", "error_rate", "boundary_precision", "boundary_recall"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.iou,
            self.f2,
            self.error_rate,
            self.boundary_precision,
            self.boundary_recall,
        ]
    }

    /// Arithmetic mean, `None` for an empty input.
    pub fn mean<'a>(scores: impl IntoIterator<Item = &'a SegmentationScores>) -> Option<Self> {
        let mut acc = [0.0; 5];
        let mut n = 0usize;
        for s in scores {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
            n += 1;
        }
        (n > 0).then(|| {
            let m = acc.map(|a| a / n as f64);
            Self {
                iou: m[0],
                f2: m[1],
                error_rate: m[2],
                boundary_precision: m[3],
                boundary_recall: m[4],
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Pixels with a 4-neighbor of the opposite label. Pixels outside the image
/// count as background, so foreground touching the border is boundary.
pub fn boundary(mask: &BinaryMask) -> Vec<bool> {
    let (w, h) = (mask.width, mask.height);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            false
        } else {
            mask.values[y as usize * w + x as usize]
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(x, y);
            out.push([(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| at(x + dx, y + dy) != c));
        }
    }
    out
}

/// Fraction of `from` boundary pixels within `tol` (Euclidean) of a `to`
/// boundary pixel. Two empty boundaries match perfectly.
fn boundary_match(from: &[bool], to: &[bool], w: usize, h: usize, tol: f64) -> f64 {
    let r = tol.floor().max(0.0) as isize;
    let tol2 = tol * tol;
    let mut total = 0usize;
    let mut hit = 0usize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !from[y as usize * w + x as usize] {
                continue;
            }
            total += 1;
            let found = (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx >= 0
                        && ny >= 0
                        && nx < w as isize
                        && ny < h as isize
                        && ((dx * dx + dy * dy) as f64) <= tol2
                        && to[ny as usize * w + nx as usize]
                })
            });
            if found {
                hit += 1;
            }
        }
    }
    if total == 0 {
        if to.iter().any(|&b| b) {
            0.0
        } else {
            1.0
        }
    } else {
        hit as f64 / total as f64
    }
}

fn confusion(pred: &BinaryMask, gt: &BinaryMask, include: impl Fn(usize) -> bool) -> Confusion {
    let mut c = Confusion::default();
    for (i, (&p, &g)) in pred.values.iter().zip(&gt.values).enumerate() {
        if !include(i) {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

pub fn score(pred: &BinaryMask, gt: &BinaryMask, boundary_tol: f64) -> Result<SegmentationScores> {
    score_excluding(pred, gt, boundary_tol, None)
}

/// Scores with an optional per-pixel exclusion mask (`true` = ignored by the
/// region metrics). Boundary metrics always use the full masks.
pub fn score_excluding(
    pred: &BinaryMask,
    gt: &BinaryMask,
    boundary_tol: f64,
    exclude: Option<&[bool]>,
) -> Result<SegmentationScores> {
    check_dims((gt.width, gt.height), (pred.width, pred.height))?;
    if boundary_tol.is_nan() || boundary_tol < 0.0 {
        return Err(Error::InvalidParameter(format!("boundary_tol must be >= 0, got {boundary_tol}")));
    }
    if let Some(ex) = exclude {
        if ex.len() != gt.values.len() {
            return Err(Error::LengthMismatch {
                expected: gt.values.len(),
                found: ex.len(),
            });
        }
    }
    if gt.foreground_count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let c = confusion(pred, gt, |i| exclude.is_none_or(|ex| !ex[i]));
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f2 = if 4.0 * precision + recall > 0.0 {
        5.0 * precision * recall / (4.0 * precision + recall)
    } else {
        0.0
    };
    let pb = boundary(pred);
    let gb = boundary(gt);
    let (w, h) = (gt.width, gt.height);
    Ok(SegmentationScores {
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
        f2,
        error_rate: ratio(c.fp + c.fn_, c.total()),
        boundary_precision: boundary_match(&pb, &gb, w, h, boundary_tol),
        boundary_recall: boundary_match(&gb, &pb, w, h, boundary_tol),
    })
}
