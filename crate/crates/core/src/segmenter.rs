//! Alternating-direction minimization of the segmentation energy.
//!
//! The relaxed labels `u ∈ [0, 1]` and an auxiliary smooth field `v` are
//! coupled through `θ/2 ‖u − v‖²`. Each outer iteration
//!
//! * minimizes `Σ (f1 − f2) uᵢ + θ/2 (uᵢ − vᵢ)²` over the box (per pixel), and
//! * minimizes `θ/2 ‖v − u‖² + λ/2 vᵀ(I − Ŵ)v` with the fast bilateral solver
//!   (targets `u`, uniform confidence `θ`).
//!
//! The result is thresholded into a [`BinaryMask`] and every scribbled pixel
//! is forced to its seed label.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bilateral::{
    fbs_solve_report, BilateralGrid, BistochasticReport, CgSettings, FbsProblem, FbsSolution, GridParams,
};
use crate::image::rgb_to_yuv;
use crate::superpixel::{build_graph, slic, SlicParams, SuperpixelGraph, SuperpixelPartition};
use crate::unary::{gaussian_unary, geodesic_unary, histogram_unary, UnaryField, UnaryMode};
use crate::{BinaryMask, Error, ImageBuffer, Label, Result, ScribbleMap};

/// How the u-subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UStep {
    #[default]
    ClosedForm,
    Sgd,
}

/// How the v-subproblem is solved. `Identity` sets `v ← u`, which removes
/// the pairwise smoothing entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VStep {
    #[default]
    Fbs,
    Identity,
}

macro_rules! impl_from_str {
    ($t:ty { $($name:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($v),)+
                    other => Err(format!("unknown value {other:?}, expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

impl_from_str!(UStep { "closed_form" => UStep::ClosedForm, "sgd" => UStep::Sgd });
impl_from_str!(VStep { "fbs" => VStep::Fbs, "identity" => VStep::Identity });
impl_from_str!(UnaryMode {
    "geodesic" => UnaryMode::Geodesic,
    "gaussian" => UnaryMode::Gaussian,
    "histogram" => UnaryMode::Histogram,
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub theta: f64,
    pub sigma_xy: f64,
    pub sigma_l: f64,
    pub sigma_uv: f64,
    pub k_target: usize,
    pub compactness: f64,
    pub slic_iters: usize,
    pub max_outer_iters: usize,
    pub outer_tol: f64,
    /// Gradient step for the SGD u-step; `None` means `0.5 / θ`.
    pub sgd_step: Option<f64>,
    pub sgd_iters: usize,
    pub threshold: f64,
    pub unary_mode: UnaryMode,
    pub u_step: UStep,
    pub v_step: VStep,
    pub histogram_bins: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub bistochastic_iters: usize,
    pub bistochastic_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let grid = GridParams::default();
        let slic = SlicParams::default();
        let cg = CgSettings::default();
        Self {
            lambda: 100.0,
            theta: 0.1,
            sigma_xy: grid.sigma_xy,
            sigma_l: grid.sigma_l,
            sigma_uv: grid.sigma_uv,
            k_target: slic.k_target,
            compactness: slic.compactness,
            slic_iters: slic.max_iters,
            max_outer_iters: 30,
            outer_tol: 1e-4,
            sgd_step: None,
            sgd_iters: 50,
            threshold: 0.5,
            unary_mode: UnaryMode::Geodesic,
            u_step: UStep::ClosedForm,
            v_step: VStep::Fbs,
            histogram_bins: 16,
            cg_tol: cg.tol,
            cg_max_iters: cg.max_iters,
            bistochastic_iters: 20,
            bistochastic_tol: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> GridParams {
        GridParams {
            sigma_xy: self.sigma_xy,
            sigma_l: self.sigma_l,
            sigma_uv: self.sigma_uv,
        }
    }

    pub fn slic(&self) -> SlicParams {
        SlicParams {
            k_target: self.k_target,
            compactness: self.compactness,
            max_iters: self.slic_iters,
        }
    }

    pub fn cg(&self) -> CgSettings {
        CgSettings {
            tol: self.cg_tol,
            max_iters: self.cg_max_iters,
        }
    }

    pub fn effective_sgd_step(&self) -> f64 {
        self.sgd_step.unwrap_or(0.5 / self.theta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad(format!("theta must be > 0, got {}", self.theta));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold must be in (0, 1), got {}", self.threshold));
        }
        for (name, v) in [
            ("max_outer_iters", self.max_outer_iters),
            ("sgd_iters", self.sgd_iters),
            ("slic_iters", self.slic_iters),
            ("cg_max_iters", self.cg_max_iters),
            ("bistochastic_iters", self.bistochastic_iters),
            ("k_target", self.k_target),
        ] {
            if v < 1 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [
            ("outer_tol", self.outer_tol),
            ("cg_tol", self.cg_tol),
            ("bistochastic_tol", self.bistochastic_tol),
            ("compactness", self.compactness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if let Some(step) = self.sgd_step {
            if !(step.is_finite() && step > 0.0) {
                return bad(format!("sgd_step must be > 0, got {step}"));
            }
        }
        self.grid().validate()
    }

    /// Overlays `overrides` on `self`. Unknown keys are rejected.
    pub fn merged(&self, overrides: &Map<String, Value>) -> Result<Self> {
        let Value::Object(mut base) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!()
        };
        for (k, v) in overrides {
            if !base.contains_key(k) {
                return Err(Error::Config(format!("unknown key {k:?}")));
            }
            base.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(Value::Object(base)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file: a JSON object, or `key = value` lines with `#`
    /// comments. Missing keys take their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        Self::default().merged(&parse_overrides(text)?)
    }
}

/// Parses config text into a key/value map without applying it.
pub fn parse_overrides(text: &str) -> Result<Map<String, Value>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return match serde_json::from_str::<Value>(trimmed) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(Error::Config("expected a JSON object".into())),
            Err(e) => Err(Error::Config(e.to_string())),
        };
    }
    let mut map = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=').or_else(|| line.split_once(':')) else {
            return Err(Error::Config(format!("line {}: expected key = value", lineno + 1)));
        };
        let (key, value) = (key.trim(), value.trim().trim_matches('"'));
        let parsed = if let Ok(i) = value.parse::<u64>() {
            Value::from(i)
        } else if let Ok(f) = value.parse::<f64>() {
            Value::from(f)
        } else if let Ok(b) = value.parse::<bool>() {
            Value::from(b)
        } else if value.eq_ignore_ascii_case("null") || value.eq_ignore_ascii_case("none") {
            Value::Null
        } else {
            Value::from(value)
        };
        if map.insert(key.to_string(), parsed).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    Ok(map)
}

/// Per-pixel minimizer of `(f1 − f2) u + θ/2 (u − v)²` over `[0, 1]`.
pub fn u_update_closed_form(unary: &UnaryField, v: &[f64], theta: f64) -> Vec<f64> {
    (0..v.len())
        .into_par_iter()
        .map(|i| (v[i] - (unary.f1[i] - unary.f2[i]) / theta).clamp(0.0, 1.0))
        .collect()
}

/// Projected gradient descent on the same objective, started from `u`.
pub fn u_update_sgd(unary: &UnaryField, u: &[f64], v: &[f64], theta: f64, step: f64, iters: usize) -> Vec<f64> {
    (0..v.len())
        .into_par_iter()
        .map(|i| {
            let slope = unary.f1[i] - unary.f2[i];
            let mut x = u[i];
            for _ in 0..iters {
                let grad = slope + theta * (x - v[i]);
                x = (x - step * grad).clamp(0.0, 1.0);
            }
            x
        })
        .collect()
}

pub fn u_update(unary: &UnaryField, u: &[f64], v: &[f64], cfg: &SolverConfig) -> Vec<f64> {
    match cfg.u_step {
        UStep::ClosedForm => u_update_closed_form(unary, v, cfg.theta),
        UStep::Sgd => u_update_sgd(unary, u, v, cfg.theta, cfg.effective_sgd_step(), cfg.sgd_iters),
    }
}

/// Solves the v-subproblem: an FBS problem with targets `u` and uniform
/// confidence `θ`.
pub fn v_update(grid: &BilateralGrid, u: &[f64], theta: f64, lambda: f64, cg: &CgSettings) -> Result<FbsSolution> {
    let problem = FbsProblem {
        target: u.to_vec(),
        confidence: vec![theta; u.len()],
        lambda,
    };
    fbs_solve_report(grid, &problem, cg)
}

fn unary_cost(unary: &UnaryField, u: &[f64]) -> f64 {
    u.iter()
        .zip(unary.f1.iter().zip(&unary.f2))
        .map(|(&u, (&f1, &f2))| f1 * u + f2 * (1.0 - u))
        .sum()
}

/// `Σ f1 u + f2 (1 − u) + λ vᵀ(I − Ŵ)v`, evaluated matrix-free.
pub fn energy(u: &[f64], v: &[f64], unary: &UnaryField, grid: &BilateralGrid, lambda: f64) -> Result<f64> {
    Ok(unary_cost(unary, u) + lambda * grid.smoothness(v)?)
}

/// The split objective both half-steps descend:
/// `Σ R(u) + θ/2 ‖u − v‖² + λ/2 vᵀ(I − Ŵ)v`.
pub fn coupled_objective(
    u: &[f64],
    v: &[f64],
    unary: &UnaryField,
    grid: &BilateralGrid,
    theta: f64,
    lambda: f64,
) -> Result<f64> {
    let coupling: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(unary_cost(unary, u) + 0.5 * theta * coupling + 0.5 * lambda * grid.smoothness(v)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub cg_iterations: Vec<usize>,
    pub cg_residuals: Vec<f64>,
    /// v-steps whose CG residual stayed above `10 × cg_tol`.
    pub cg_failures: usize,
    pub bistochastic: Option<BistochasticReport>,
    pub superpixel_count: Option<usize>,
    pub vertex_count: usize,
}

impl Diagnostics {
    /// First solver non-convergence recorded during the run, if any.
    pub fn solver_error(&self, cfg: &SolverConfig) -> Option<Error> {
        if let Some(report) = &self.bistochastic {
            if let Err(e) = report.check(cfg.bistochastic_tol) {
                return Some(e);
            }
        }
        self.cg_residuals
            .iter()
            .zip(&self.cg_iterations)
            .find(|(&r, _)| r > 10.0 * cfg.cg_tol)
            .map(|(&residual, &iterations)| Error::CgNonConvergence { iterations, residual })
    }
}

#[derive(Debug, Clone)]
pub struct SegmentationState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub unary: UnaryField,
    /// Energy after every outer iteration.
    pub energy_trace: Vec<f64>,
    /// Coupled objective at the start and after every half-step.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub mask: BinaryMask,
    pub diagnostics: Diagnostics,
}

pub fn build_superpixels(img: &ImageBuffer, cfg: &SolverConfig) -> Result<(SuperpixelPartition, SuperpixelGraph)> {
    let mut params = cfg.slic();
    params.k_target = params.k_target.min(img.pixel_count());
    let part = slic(img, &params)?;
    let graph = build_graph(&part);
    Ok((part, graph))
}

pub fn build_grid(img: &ImageBuffer, cfg: &SolverConfig) -> Result<(BilateralGrid, BistochasticReport)> {
    let mut grid = BilateralGrid::build(&rgb_to_yuv(img), &cfg.grid())?;
    let report = grid.bistochastize(cfg.bistochastic_iters, cfg.bistochastic_tol);
    Ok((grid, report))
}

/// Runs the full pipeline: superpixels, unary, bilateral grid, iteration.
pub fn segment(img: &ImageBuffer, scribbles: &ScribbleMap, cfg: &SolverConfig) -> Result<SegmentationState> {
    cfg.validate()?;
    scribbles.check_dims(img.width(), img.height())?;
    scribbles.require_both_classes()?;
    let superpixels = match cfg.unary_mode {
        UnaryMode::Geodesic => Some(build_superpixels(img, cfg)?),
        _ => None,
    };
    let (grid, report) = build_grid(img, cfg)?;
    let mut state = segment_with(img, scribbles, cfg, superpixels.as_ref().map(|(p, g)| (p, g)), &grid)?;
    state.diagnostics.bistochastic = Some(report);
    Ok(state)
}

/// Like [`segment`] but with caller-provided superpixels and grid, which
/// only depend on the image and configuration and can be reused across
/// scribble edits. Superpixels are required in geodesic mode.
pub fn segment_with(
    img: &ImageBuffer,
    scribbles: &ScribbleMap,
    cfg: &SolverConfig,
    superpixels: Option<(&SuperpixelPartition, &SuperpixelGraph)>,
    grid: &BilateralGrid,
) -> Result<SegmentationState> {
    cfg.validate()?;
    scribbles.check_dims(img.width(), img.height())?;
    scribbles.require_both_classes()?;
    if grid.pixel_count() != img.pixel_count() {
        return Err(Error::LengthMismatch {
            expected: img.pixel_count(),
            found: grid.pixel_count(),
        });
    }

    let unary = match cfg.unary_mode {
        UnaryMode::Geodesic => {
            let (part, graph) = superpixels
                .ok_or_else(|| Error::InvalidParameter("geodesic unary needs superpixels".into()))?;
            geodesic_unary(graph, part, scribbles)?
        }
        UnaryMode::Gaussian => gaussian_unary(img, scribbles)?,
        UnaryMode::Histogram => histogram_unary(img, scribbles, cfg.histogram_bins)?,
    };

    let mut diagnostics = Diagnostics {
        superpixel_count: superpixels.map(|(p, _)| p.len()),
        vertex_count: grid.vertex_count(),
        ..Default::default()
    };

    let mut u: Vec<f64> = unary
        .f1
        .iter()
        .zip(&unary.f2)
        .map(|(a, b)| if a < b { 1.0 } else { 0.0 })
        .collect();
    let mut v = u.clone();
    let cg = cfg.cg();
    let objective = |u: &[f64], v: &[f64]| coupled_objective(u, v, &unary, grid, cfg.theta, cfg.lambda);
    let mut objective_trace = vec![objective(&u, &v)?];
    let mut energy_trace = Vec::new();
    let mut outer_iters = 0;
    let mut converged = false;

    while outer_iters < cfg.max_outer_iters {
        outer_iters += 1;
        let next_u = u_update(&unary, &u, &v, cfg);
        let delta = next_u
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        u = next_u;
        objective_trace.push(objective(&u, &v)?);

        v = match cfg.v_step {
            VStep::Fbs => {
                let sol = v_update(grid, &u, cfg.theta, cfg.lambda, &cg)?;
                diagnostics.cg_iterations.push(sol.iterations);
                diagnostics.cg_residuals.push(sol.residual);
                if sol.check(cfg.cg_tol).is_err() {
                    diagnostics.cg_failures += 1;
                }
                sol.values
            }
            VStep::Identity => u.clone(),
        };
        objective_trace.push(objective(&u, &v)?);
        energy_trace.push(energy(&u, &v, &unary, grid, cfg.lambda)?);

        // With v⁰ = u⁰ the first u-step reproduces u⁰, so the test only
        // means something once v has been smoothed at least once.
        if outer_iters > 1 && delta < cfg.outer_tol {
            converged = true;
            break;
        }
    }

    let mask = finalize_mask(img.width(), img.height(), &u, cfg.threshold, scribbles);
    Ok(SegmentationState {
        u,
        v,
        unary,
        energy_trace,
        objective_trace,
        outer_iters,
        converged,
        mask,
        diagnostics,
    })
}

/// Thresholds `u` and forces every seed pixel to its scribble label.
pub fn finalize_mask(width: usize, height: usize, u: &[f64], threshold: f64, scribbles: &ScribbleMap) -> BinaryMask {
    let values = u
        .iter()
        .zip(scribbles.labels())
        .map(|(&u, l)| match l {
            Label::Foreground => true,
            Label::Background => false,
            Label::Unlabeled => u >= threshold,
        })
        .collect();
    BinaryMask {
        width,
        height,
        values,
    }
}

/// Config as a sorted key/value listing, used for report echoes.
pub fn config_echo(cfg: &SolverConfig) -> BTreeMap<String, Value> {
    match serde_json::to_value(cfg).expect("config serializes") {
        Value::Object(m) => m.into_iter().collect(),
        _ => unreachable!(),
    }
}
