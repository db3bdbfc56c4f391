use std::collections::BTreeMap;
use std::time::Instant;

use geoseg::image::{load_ground_truth, load_image, load_scribbles};
use geoseg::metrics::{score_excluding, SegmentationScores};
use geoseg::segmenter::{config_echo, segment, SolverConfig, VStep};
use geoseg::{BinaryMask, ImageBuffer, Label, ScribbleMap};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::synthetic::SyntheticSample;
use crate::{DatasetIndex, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    /// Concurrent images; 0 uses every available core.
    pub workers: usize,
    pub boundary_tol: f64,
    /// Drop gray (neither black nor white) ground-truth pixels from the
    /// region metrics.
    pub exclude_uncertain: bool,
    /// Drop scribbled pixels from the region metrics.
    pub exclude_seeds: bool,
    /// Treat solver non-convergence as a per-image failure.
    pub strict: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            boundary_tol: 2.0,
            exclude_uncertain: false,
            exclude_seeds: false,
            strict: false,
        }
    }
}

pub struct LoadedSample {
    pub image: ImageBuffer,
    pub scribbles: ScribbleMap,
    pub ground_truth: BinaryMask,
    pub uncertain: Option<Vec<bool>>,
}

/// Anything that can hand out evaluation samples by position.
pub trait EvalSource: Sync {
    fn len(&self) -> usize;
    fn id(&self, i: usize) -> String;
    fn load(&self, i: usize) -> geoseg::Result<LoadedSample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EvalSource for DatasetIndex {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn id(&self, i: usize) -> String {
        self.entries[i].id.clone()
    }

    fn load(&self, i: usize) -> geoseg::Result<LoadedSample> {
        let e = &self.entries[i];
        let image = load_image(&e.image_path)?;
        let scribbles = load_scribbles(&e.annotation_path, image.width(), image.height())?;
        let gt = load_ground_truth(&e.gt_path)?;
        let uncertain = gt.has_uncertain().then_some(gt.uncertain);
        Ok(LoadedSample {
            image,
            scribbles,
            ground_truth: gt.mask,
            uncertain,
        })
    }
}

impl EvalSource for [SyntheticSample] {
    fn len(&self) -> usize {
        <[SyntheticSample]>::len(self)
    }

    fn id(&self, i: usize) -> String {
        self[i].id.clone()
    }

    fn load(&self, i: usize) -> geoseg::Result<LoadedSample> {
        let s = &self[i];
        Ok(LoadedSample {
            image: s.image.clone(),
            scribbles: s.scribbles.clone(),
            ground_truth: s.ground_truth.clone(),
            uncertain: None,
        })
    }
}

impl EvalSource for Vec<SyntheticSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn id(&self, i: usize) -> String {
        self.as_slice().id(i)
    }

    fn load(&self, i: usize) -> geoseg::Result<LoadedSample> {
        self.as_slice().load(i)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageResult {
    pub id: String,
    pub scores: Option<SegmentationScores>,
    /// Error kind and message for a failed image.
    pub error: Option<(String, String)>,
    pub wall_time: f64,
    pub outer_iters: Option<usize>,
    /// Whether every scribbled pixel ended up with its scribble label.
    pub seeds_correct: Option<bool>,
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// In source order.
    pub per_image: Vec<ImageResult>,
    /// Mean over successful images, `None` if every image failed.
    pub means: Option<SegmentationScores>,
    pub failures: usize,
    pub config_echo: BTreeMap<String, Value>,
    pub options: EvalOptions,
}

impl EvalReport {
    pub fn succeeded(&self) -> usize {
        self.per_image.len() - self.failures
    }

    pub fn all_failed(&self) -> bool {
        self.failures == self.per_image.len()
    }

    pub fn seeds_all_correct(&self) -> bool {
        self.per_image.iter().all(|r| r.seeds_correct != Some(false))
    }

    /// One row per image plus a `MEAN` row. Wall times are left out so that
    /// reruns produce identical files.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id"];
        header.extend(SegmentationScores::FIELDS);
        header.push("error");
        w.write_record(&header).expect("in-memory write");
        for r in &self.per_image {
            let err = r.error.as_ref().map(|(code, _)| code.as_str()).unwrap_or("");
            w.write_record(score_record(&r.id, r.scores.as_ref(), err)).expect("in-memory write");
        }
        let note = if self.failures > 0 {
            format!("{} excluded", self.failures)
        } else {
            String::new()
        };
        w.write_record(score_record("MEAN", self.means.as_ref(), &note)).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn score_record(label: &str, scores: Option<&SegmentationScores>, last: &str) -> Vec<String> {
    let mut rec = vec![label.to_string()];
    match scores {
        Some(s) => rec.extend(s.values().iter().map(|v| v.to_string())),
        None => rec.extend(std::iter::repeat_n(String::new(), SegmentationScores::FIELDS.len())),
    }
    rec.push(last.to_string());
    rec
}

fn run_one(source: &(impl EvalSource + ?Sized), i: usize, cfg: &SolverConfig, opts: &EvalOptions) -> ImageResult {
    let start = Instant::now();
    let id = source.id(i);
    let outcome = (|| {
        let sample = source.load(i)?;
        let state = segment(&sample.image, &sample.scribbles, cfg)?;
        if opts.strict {
            if let Some(e) = state.diagnostics.solver_error(cfg) {
                return Err(e);
            }
        }
        let n = sample.image.pixel_count();
        let mut exclude = vec![false; n];
        if opts.exclude_seeds {
            for (e, l) in exclude.iter_mut().zip(sample.scribbles.labels()) {
                *e |= *l != Label::Unlabeled;
            }
        }
        if opts.exclude_uncertain {
            if let Some(unc) = &sample.uncertain {
                for (e, &u) in exclude.iter_mut().zip(unc) {
                    *e |= u;
                }
            }
        }
        let excluding = (opts.exclude_seeds || opts.exclude_uncertain).then_some(exclude.as_slice());
        let scores = score_excluding(&state.mask, &sample.ground_truth, opts.boundary_tol, excluding)?;
        let seeds_correct = sample
            .scribbles
            .labels()
            .iter()
            .zip(&state.mask.values)
            .all(|(l, &m)| match l {
                Label::Foreground => m,
                Label::Background => !m,
                Label::Unlabeled => true,
            });
        Ok::<_, geoseg::Error>((scores, state.outer_iters, seeds_correct, state.mask))
    })();
    let wall_time = start.elapsed().as_secs_f64();
    match outcome {
        Ok((scores, iters, seeds_correct, mask)) => ImageResult {
            id,
            scores: Some(scores),
            error: None,
            wall_time,
            outer_iters: Some(iters),
            seeds_correct: Some(seeds_correct),
            mask: Some(mask),
        },
        Err(e) => ImageResult {
            id,
            scores: None,
            error: Some((e.code().to_string(), e.to_string())),
            wall_time,
            outer_iters: None,
            seeds_correct: None,
            mask: None,
        },
    }
}

/// Segments and scores every sample of `source`. Per-image failures are
/// recorded in the report and excluded from the means.
pub fn evaluate_source(
    source: &(impl EvalSource + ?Sized),
    cfg: &SolverConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    cfg.validate()?;
    if opts.boundary_tol.is_nan() || opts.boundary_tol < 0.0 {
        return Err(HarnessError::InvalidParameter(format!(
            "boundary_tol must be >= 0, got {}",
            opts.boundary_tol
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| HarnessError::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    let per_image: Vec<ImageResult> =
        pool.install(|| (0..source.len()).into_par_iter().map(|i| run_one(source, i, cfg, opts)).collect());
    let failures = per_image.iter().filter(|r| r.scores.is_none()).count();
    let means = SegmentationScores::mean(per_image.iter().filter_map(|r| r.scores.as_ref()));
    Ok(EvalReport {
        per_image,
        means,
        failures,
        config_echo: config_echo(cfg),
        options: *opts,
    })
}

pub fn evaluate(index: &DatasetIndex, cfg: &SolverConfig, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_source(index, cfg, opts)
}

/// Evaluates once per superpixel count in `k_list` (which must be nonempty
/// and strictly ascending).
pub fn ablate_superpixels(
    source: &(impl EvalSource + ?Sized),
    cfg: &SolverConfig,
    k_list: &[usize],
    opts: &EvalOptions,
) -> Result<Vec<(usize, EvalReport)>> {
    if k_list.is_empty() {
        return Err(HarnessError::InvalidParameter("k_list is empty".into()));
    }
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::InvalidParameter(format!(
            "k_list must be strictly ascending, got {k_list:?}"
        )));
    }
    k_list
        .iter()
        .map(|&k| {
            let cfg = SolverConfig { k_target: k, ..cfg.clone() };
            Ok((k, evaluate_source(source, &cfg, opts)?))
        })
        .collect()
}

/// Evaluates with the bilateral v-step and with `v ← u` (no pairwise
/// smoothing); returns `(with, without)`.
pub fn ablate_fbs(
    source: &(impl EvalSource + ?Sized),
    cfg: &SolverConfig,
    opts: &EvalOptions,
) -> Result<(EvalReport, EvalReport)> {
    let with = evaluate_source(source, &SolverConfig { v_step: VStep::Fbs, ..cfg.clone() }, opts)?;
    let without = evaluate_source(source, &SolverConfig { v_step: VStep::Identity, ..cfg.clone() }, opts)?;
    Ok((with, without))
}

/// Summary table of labelled reports: one CSV row of mean scores each.
pub fn ablation_csv<'a>(rows: impl IntoIterator<Item = (String, &'a EvalReport)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["setting"];
    header.extend(SegmentationScores::FIELDS);
    header.push("failures");
    w.write_record(&header).expect("in-memory write");
    for (label, report) in rows {
        w.write_record(score_record(&label, report.means.as_ref(), &report.failures.to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
