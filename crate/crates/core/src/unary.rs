//! Per-pixel unary costs.
//!
//! `f1` is the cost of labeling a pixel foreground and `f2` the cost of
//! labeling it background. Three builders are provided: geodesic distances on
//! the superpixel graph (the default), a per-class Gaussian color model, and a
//! per-class color histogram. Every builder clamps seed pixels to hard 0/1
//! costs so scribbles are authoritative.

use serde::{Deserialize, Serialize};

use crate::geodesic::multi_source_dijkstra;
use crate::superpixel::{SuperpixelGraph, SuperpixelPartition};
use crate::{Error, ImageBuffer, Label, Result, ScribbleMap};

const DISTANCE_EPS: f64 = 1e-12;
const VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryMode {
    #[default]
    Geodesic,
    Gaussian,
    Histogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    pub width: usize,
    pub height: usize,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl UnaryField {
    fn clamp_seeds(&mut self, scribbles: &ScribbleMap) {
        for (i, l) in scribbles.labels().iter().enumerate() {
            match l {
                Label::Foreground => {
                    self.f1[i] = 0.0;
                    self.f2[i] = 1.0;
                }
                Label::Background => {
                    self.f1[i] = 1.0;
                    self.f2[i] = 0.0;
                }
                Label::Unlabeled => {}
            }
        }
    }

    /// Shifts both cost maps by one constant so the global minimum is zero.
    fn shift_to_zero(&mut self) {
        let min = self.f1.iter().chain(&self.f2).copied().fold(f64::INFINITY, f64::min);
        self.f1.iter_mut().chain(self.f2.iter_mut()).for_each(|v| *v -= min);
    }
}

/// Geodesic distance from every superpixel to the nearest foreground-seeded
/// and background-seeded superpixel, `(to_fg, to_bg)`.
pub fn seed_distances(
    graph: &SuperpixelGraph,
    part: &SuperpixelPartition,
    scribbles: &ScribbleMap,
) -> Result<(Vec<f64>, Vec<f64>)> {
    scribbles.check_dims(part.width, part.height)?;
    scribbles.require_both_classes()?;
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (i, l) in scribbles.labels().iter().enumerate() {
        match l {
            Label::Foreground => fg.push(part.labels[i] as usize),
            Label::Background => bg.push(part.labels[i] as usize),
            Label::Unlabeled => {}
        }
    }
    fg.sort_unstable();
    fg.dedup();
    bg.sort_unstable();
    bg.dedup();
    let to_fg = multi_source_dijkstra(graph, &fg);
    let to_bg = multi_source_dijkstra(graph, &bg);
    if let Some(k) = to_fg.iter().zip(&to_bg).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::DisconnectedGraph(format!(
            "superpixel {k} is unreachable from a seed set"
        )));
    }
    Ok((to_fg, to_bg))
}

/// Normalized geodesic costs: a pixel in superpixel `k` gets
/// `f1 = d_F / (d_F + d_B)` and `f2 = d_B / (d_F + d_B)`.
pub fn geodesic_unary(
    graph: &SuperpixelGraph,
    part: &SuperpixelPartition,
    scribbles: &ScribbleMap,
) -> Result<UnaryField> {
    let (to_fg, to_bg) = seed_distances(graph, part, scribbles)?;
    let (per_fg, per_bg): (Vec<f64>, Vec<f64>) = to_fg
        .iter()
        .zip(&to_bg)
        .map(|(&f, &b)| {
            let total = f + b + DISTANCE_EPS;
            (f / total, b / total)
        })
        .unzip();
    let mut field = UnaryField {
        width: part.width,
        height: part.height,
        f1: part.labels.iter().map(|&k| per_fg[k as usize]).collect(),
        f2: part.labels.iter().map(|&k| per_bg[k as usize]).collect(),
    };
    field.clamp_seeds(scribbles);
    Ok(field)
}

fn seed_colors(img: &ImageBuffer, scribbles: &ScribbleMap, label: Label) -> Vec<[f64; 3]> {
    scribbles
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == label)
        .map(|(i, _)| img.pixel_at(i).map(|c| c as f64 / 255.0))
        .collect()
}

struct GaussianModel {
    mean: [f64; 3],
    var: [f64; 3],
}

impl GaussianModel {
    fn fit(samples: &[[f64; 3]]) -> Self {
        let n = samples.len() as f64;
        let mut mean = [0.0; 3];
        for s in samples {
            for c in 0..3 {
                mean[c] += s[c] / n;
            }
        }
        let mut var = [0.0; 3];
        for s in samples {
            for c in 0..3 {
                var[c] += (s[c] - mean[c]).powi(2) / (n - 1.0);
            }
        }
        Self {
            mean,
            var: var.map(|v| v.max(VARIANCE_FLOOR)),
        }
    }

    fn cost(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|c| (p[c] - self.mean[c]).powi(2) / (2.0 * self.var[c]) + 0.5 * self.var[c].ln())
            .sum()
    }
}

/// Gaussian color model per class, summed over RGB channels in `[0, 1]`.
/// Uses the unbiased seed variance, floored at `1e-4`.
pub fn gaussian_unary(img: &ImageBuffer, scribbles: &ScribbleMap) -> Result<UnaryField> {
    scribbles.check_dims(img.width(), img.height())?;
    scribbles.require_both_classes()?;
    let fg = seed_colors(img, scribbles, Label::Foreground);
    let bg = seed_colors(img, scribbles, Label::Background);
    if fg.len() < 2 || bg.len() < 2 {
        return Err(Error::DegenerateSeeds(format!(
            "need at least 2 seeds per class, got {} foreground and {} background",
            fg.len(),
            bg.len()
        )));
    }
    let (fg, bg) = (GaussianModel::fit(&fg), GaussianModel::fit(&bg));
    let colors: Vec<[f64; 3]> = img.pixels().map(|p| p.map(|c| c as f64 / 255.0)).collect();
    let mut field = UnaryField {
        width: img.width(),
        height: img.height(),
        f1: colors.iter().map(|&p| fg.cost(p)).collect(),
        f2: colors.iter().map(|&p| bg.cost(p)).collect(),
    };
    field.shift_to_zero();
    field.clamp_seeds(scribbles);
    Ok(field)
}

/// Laplace-smoothed 3-D color histogram per class; cost is the negative log
/// probability of the pixel's bin.
pub fn histogram_unary(img: &ImageBuffer, scribbles: &ScribbleMap, bins_per_channel: usize) -> Result<UnaryField> {
    if !(2..=64).contains(&bins_per_channel) {
        return Err(Error::InvalidParameter(format!(
            "bins_per_channel must be in [2, 64], got {bins_per_channel}"
        )));
    }
    scribbles.check_dims(img.width(), img.height())?;
    scribbles.require_both_classes()?;
    let b = bins_per_channel;
    let bin_of = |p: [u8; 3]| {
        let q = |c: u8| c as usize * b / 256;
        (q(p[0]) * b + q(p[1])) * b + q(p[2])
    };
    let total_bins = b * b * b;
    let mut hist_fg = vec![1.0f64; total_bins];
    let mut hist_bg = vec![1.0f64; total_bins];
    for (i, l) in scribbles.labels().iter().enumerate() {
        match l {
            Label::Foreground => hist_fg[bin_of(img.pixel_at(i))] += 1.0,
            Label::Background => hist_bg[bin_of(img.pixel_at(i))] += 1.0,
            Label::Unlabeled => {}
        }
    }
    let (nf, nb) = scribbles.seed_counts();
    let fg_total = (nf + total_bins) as f64;
    let bg_total = (nb + total_bins) as f64;
    let mut field = UnaryField {
        width: img.width(),
        height: img.height(),
        f1: img.pixels().map(|p| -(hist_fg[bin_of(p)] / fg_total).ln()).collect(),
        f2: img.pixels().map(|p| -(hist_bg[bin_of(p)] / bg_total).ln()).collect(),
    };
    field.shift_to_zero();
    field.clamp_seeds(scribbles);
    Ok(field)
}
