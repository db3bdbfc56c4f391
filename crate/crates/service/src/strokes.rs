//! Scribble strokes as sent by the browser, rasterized on the server so the
//! resulting seed sets never depend on client-side rendering.

use geoseg::{Label, ScribbleMap};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrokeLabel {
    #[serde(alias = "FG", alias = "foreground")]
    Fg,
    #[serde(alias = "BG", alias = "background")]
    Bg,
    #[serde(alias = "Erase", alias = "ERASE")]
    Erase,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stroke {
    pub label: StrokeLabel,
    /// Polyline vertices in pixel coordinates (pixel centers are integers).
    pub points: Vec<[f64; 2]>,
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokeBatch {
    pub strokes: Vec<Stroke>,
}

impl Stroke {
    pub fn validate(&self) -> Result<(), String> {
        if self.points.is_empty() {
            return Err("stroke has no points".into());
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(format!("radius must be finite and >= 0, got {}", self.radius));
        }
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return Err("stroke coordinates must be finite".into());
        }
        Ok(())
    }
}

fn segment_distance2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - cx).powi(2) + (p[1] - cy).powi(2)
}

/// Paints the disk of `radius` swept along the polyline: every pixel whose
/// center lies within `radius` of some segment.
pub fn rasterize(stroke: &Stroke, map: &mut ScribbleMap) {
    let label = match stroke.label {
        StrokeLabel::Fg => Label::Foreground,
        StrokeLabel::Bg => Label::Background,
        StrokeLabel::Erase => Label::Unlabeled,
    };
    let (w, h) = (map.width() as f64, map.height() as f64);
    let r = stroke.radius;
    let r2 = r * r;
    let first = stroke.points[0];
    let segments = std::iter::once((first, first)).chain(stroke.points.windows(2).map(|s| (s[0], s[1])));
    for (a, b) in segments {
        let x0 = (a[0].min(b[0]) - r).ceil().max(0.0);
        let x1 = (a[0].max(b[0]) + r).floor().min(w - 1.0);
        let y0 = (a[1].min(b[1]) - r).ceil().max(0.0);
        let y1 = (a[1].max(b[1]) + r).floor().min(h - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                if segment_distance2([x as f64, y as f64], a, b) <= r2 {
                    map.set(x, y, label);
                }
            }
        }
    }
}
