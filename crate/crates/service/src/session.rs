use std::time::Instant;

use geoseg::bilateral::{BilateralGrid, BistochasticReport, GridParams};
use geoseg::segmenter::{build_grid, build_superpixels, segment_with, SolverConfig};
use geoseg::superpixel::{SlicParams, SuperpixelGraph, SuperpixelPartition};
use geoseg::unary::UnaryMode;
use geoseg::{ImageBuffer, ScribbleMap};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridKey {
    params: GridParams,
    iters: usize,
    tol: f64,
}

impl GridKey {
    fn of(cfg: &SolverConfig) -> Self {
        Self {
            params: cfg.grid(),
            iters: cfg.bistochastic_iters,
            tol: cfg.bistochastic_tol,
        }
    }
}

fn slic_key(img: &ImageBuffer, cfg: &SolverConfig) -> SlicParams {
    let mut p = cfg.slic();
    p.k_target = p.k_target.min(img.pixel_count());
    p
}

pub struct Session {
    pub image: ImageBuffer,
    pub scribbles: ScribbleMap,
    /// PNG bytes of the latest mask.
    pub last_mask: Option<Vec<u8>>,
    pub created_at: Instant,
    pub last_used: Instant,
    superpixels: Option<(SlicParams, SuperpixelPartition, SuperpixelGraph)>,
    grid: Option<(GridKey, BilateralGrid, BistochasticReport)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub outer_iters: usize,
    pub converged: bool,
    pub wall_ms: f64,
    pub vertex_count: usize,
    #[serde(rename = "K")]
    pub superpixels: Option<usize>,
    pub foreground_pixels: usize,
    pub superpixel_cache_hit: bool,
    pub grid_cache_hit: bool,
}

pub struct RunOutput {
    pub stats: RunStats,
    pub mask_png: Vec<u8>,
}

impl Session {
    pub fn new(image: ImageBuffer) -> Self {
        let now = Instant::now();
        let scribbles = ScribbleMap::new(image.width(), image.height());
        Self {
            image,
            scribbles,
            last_mask: None,
            created_at: now,
            last_used: now,
            superpixels: None,
            grid: None,
        }
    }

    /// Runs the pipeline, rebuilding superpixels and the grid only when the
    /// parameters that generate them changed (or `use_cache` is off).
    pub fn run(&mut self, cfg: &SolverConfig, use_cache: bool) -> geoseg::Result<RunOutput> {
        let start = Instant::now();
        cfg.validate()?;
        self.scribbles.require_both_classes()?;

        let mut superpixel_cache_hit = false;
        if cfg.unary_mode == UnaryMode::Geodesic {
            let key = slic_key(&self.image, cfg);
            match &self.superpixels {
                Some((k, _, _)) if use_cache && *k == key => superpixel_cache_hit = true,
                _ => {
                    let (part, graph) = build_superpixels(&self.image, cfg)?;
                    self.superpixels = Some((key, part, graph));
                }
            }
        }
        let key = GridKey::of(cfg);
        let grid_cache_hit = matches!(&self.grid, Some((k, _, _)) if use_cache && *k == key);
        if !grid_cache_hit {
            let (grid, report) = build_grid(&self.image, cfg)?;
            self.grid = Some((key, grid, report));
        }
        let (_, grid, report) = self.grid.as_ref().expect("grid was just ensured");
        let superpixels = match cfg.unary_mode {
            UnaryMode::Geodesic => self.superpixels.as_ref().map(|(_, p, g)| (p, g)),
            _ => None,
        };
        let mut state = segment_with(&self.image, &self.scribbles, cfg, superpixels, grid)?;
        state.diagnostics.bistochastic = Some(*report);
        let mask_png = state.mask.to_png_bytes()?;
        self.last_mask = Some(mask_png.clone());
        Ok(RunOutput {
            stats: RunStats {
                outer_iters: state.outer_iters,
                converged: state.converged,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                vertex_count: grid.vertex_count(),
                superpixels: state.diagnostics.superpixel_count,
                foreground_pixels: state.mask.foreground_count(),
                superpixel_cache_hit,
                grid_cache_hit,
            },
            mask_png,
        })
    }
}
