use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ArgMatches;
use geoseg::image::{label_boundary_overlay, load_image, load_scribbles, save_image, save_mask, scalar_field_png};
use geoseg::segmenter::{
    build_grid, build_superpixels, config_echo, parse_overrides, segment_with, SegmentationState, SolverConfig,
};
use geoseg::unary::UnaryMode;
use geoseg::Error;
use geoseg_harness::{
    ablate_fbs, ablate_superpixels, ablation_csv, evaluate, index_dataset, DatasetIndex, EvalOptions, EvalReport,
    HarnessError,
};
use serde_json::json;

use crate::args::{AblateKArgs, EvalArgs, EvalOutputArgs, GridInfoArgs, SegmentArgs, SolverFlags};

/// A one-line, machine-readable failure and the process exit code for it.
#[derive(Debug)]
pub struct Failure {
    pub code: String,
    pub message: String,
}

impl Failure {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code.as_str() {
            "MissingSeeds" | "DegenerateSeeds" => 3,
            "CgNonConvergence" | "NonConvergence" => 4,
            "FileNotFound" | "UnsupportedFormat" | "CorruptImage" | "DimensionMismatch" | "EmptyGroundTruth"
            | "EmptyDataset" | "UnreadableDirectory" | "AllFailed" | "InvalidConfig" | "InvalidParameter" | "Io" => 2,
            _ => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CmdResult = Result<(), Failure>;

pub fn resolve_config(flags: &SolverFlags, matches: &ArgMatches) -> Result<SolverConfig, Failure> {
    let mut cfg = SolverConfig::default();
    if let Some(path) = flags.config_path() {
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Failure::from(Error::FileNotFound(path.clone())),
            _ => Failure::from(e),
        })?;
        cfg = cfg.merged(&parse_overrides(&text)?)?;
    }
    Ok(cfg.merged(&flags.explicit(matches))?)
}

fn normalized(values: &[f64], max: f64) -> Vec<f64> {
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    values.iter().map(|v| v * scale).collect()
}

fn write_debug(
    dir: &Path,
    img: &geoseg::ImageBuffer,
    labels: Option<&[u32]>,
    state: &SegmentationState,
    cfg: &SolverConfig,
    wall_time: f64,
) -> CmdResult {
    fs::create_dir_all(dir)?;
    let (w, h) = (img.width(), img.height());
    if let Some(labels) = labels {
        save_image(&label_boundary_overlay(img, labels, [255, 255, 0]), dir.join("superpixels.png"))?;
    }
    let max = state.unary.f1.iter().chain(&state.unary.f2).fold(0.0, |m: f64, &v| m.max(v));
    fs::write(dir.join("f1.png"), scalar_field_png(w, h, &normalized(&state.unary.f1, max))?)?;
    fs::write(dir.join("f2.png"), scalar_field_png(w, h, &normalized(&state.unary.f2, max))?)?;
    fs::write(dir.join("u.png"), scalar_field_png(w, h, &state.u)?)?;
    fs::write(dir.join("v.png"), scalar_field_png(w, h, &state.v)?)?;
    let trace = json!({
        "config": config_echo(cfg),
        "energy_trace": state.energy_trace,
        "objective_trace": state.objective_trace,
        "outer_iters": state.outer_iters,
        "converged": state.converged,
        "diagnostics": state.diagnostics,
        "wall_time": wall_time,
    });
    fs::write(dir.join("trace.json"), serde_json::to_string_pretty(&trace).expect("trace serializes"))?;
    Ok(())
}

pub fn run_segment(args: &SegmentArgs, cfg: &SolverConfig) -> CmdResult {
    let img = load_image(&args.image)?;
    let scribbles = load_scribbles(&args.scribbles, img.width(), img.height())?;
    scribbles.require_both_classes()?;

    let start = Instant::now();
    let superpixels = match cfg.unary_mode {
        UnaryMode::Geodesic => Some(build_superpixels(&img, cfg)?),
        _ => None,
    };
    let (grid, report) = build_grid(&img, cfg)?;
    let mut state = segment_with(&img, &scribbles, cfg, superpixels.as_ref().map(|(p, g)| (p, g)), &grid)?;
    state.diagnostics.bistochastic = Some(report);
    let wall_time = start.elapsed().as_secs_f64();

    if args.solver.strict {
        if let Some(e) = state.diagnostics.solver_error(cfg) {
            return Err(e.into());
        }
    }
    save_mask(&state.mask, &args.out)?;
    if let Some(dir) = &args.dump_debug {
        let dir = if dir.as_os_str().is_empty() {
            let mut d = args.out.clone().into_os_string();
            d.push(".debug");
            PathBuf::from(d)
        } else {
            dir.clone()
        };
        let labels = superpixels.as_ref().map(|(p, _)| p.labels.as_slice());
        write_debug(&dir, &img, labels, &state, cfg, wall_time)?;
    }
    println!(
        "wall_time={wall_time:.3}s outer_iters={} converged={} foreground={}",
        state.outer_iters,
        state.converged,
        state.mask.foreground_count()
    );
    Ok(())
}

fn eval_options(out: &EvalOutputArgs, flags: &SolverFlags) -> EvalOptions {
    EvalOptions {
        workers: out.workers,
        boundary_tol: out.boundary_tol,
        exclude_uncertain: out.exclude_unknown,
        exclude_seeds: out.exclude_seeds,
        strict: flags.strict,
    }
}

fn load_index(root: &Path) -> Result<DatasetIndex, Failure> {
    let index = index_dataset(root)?;
    for w in &index.warnings {
        eprintln!("warning: {w}");
    }
    Ok(index)
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> CmdResult {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), report.to_csv())?;
    fs::write(dir.join(format!("{stem}.json")), report.to_json())?;
    Ok(())
}

/// Exit status for finished reports: non-convergence under `--strict`
/// wins, then total failure.
fn check_reports<'a>(reports: impl IntoIterator<Item = &'a EvalReport>, strict: bool) -> CmdResult {
    let reports: Vec<&EvalReport> = reports.into_iter().collect();
    if strict {
        let nonconv = reports
            .iter()
            .flat_map(|r| &r.per_image)
            .find(|r| r.error.as_ref().is_some_and(|(c, _)| c.ends_with("NonConvergence")));
        if let Some(r) = nonconv {
            let (code, msg) = r.error.as_ref().unwrap();
            return Err(Failure::new(code, format!("{}: {msg}", r.id)));
        }
    }
    if reports.iter().all(|r| r.all_failed()) {
        let n = reports.first().map_or(0, |r| r.per_image.len());
        return Err(Failure::new("AllFailed", format!("all {n} images failed")));
    }
    Ok(())
}

fn print_failures(report: &EvalReport) {
    for r in &report.per_image {
        if let Some((code, msg)) = &r.error {
            eprintln!("warning: {}: {code}: {msg}", r.id);
        }
    }
}

pub fn run_eval(args: &EvalArgs, cfg: &SolverConfig) -> CmdResult {
    let index = load_index(&args.root)?;
    let report = evaluate(&index, cfg, &eval_options(&args.output, &args.solver))?;
    print_failures(&report);
    write_report(&args.output.out_dir, "eval", &report)?;
    print!("{}", ablation_csv([("mean".to_string(), &report)]));
    check_reports([&report], args.solver.strict)
}

pub fn run_ablate_k(args: &AblateKArgs, cfg: &SolverConfig) -> CmdResult {
    let index = load_index(&args.root)?;
    let reports = ablate_superpixels(&index, cfg, &args.k_list, &eval_options(&args.output, &args.solver))?;
    for (k, r) in &reports {
        print_failures(r);
        write_report(&args.output.out_dir, &format!("ablate_k_{k}"), r)?;
    }
    let table = ablation_csv(reports.iter().map(|(k, r)| (k.to_string(), r)));
    fs::write(args.output.out_dir.join("ablate_k.csv"), &table)?;
    print!("{table}");
    check_reports(reports.iter().map(|(_, r)| r), args.solver.strict)
}

pub fn run_ablate_fbs(args: &EvalArgs, cfg: &SolverConfig) -> CmdResult {
    let index = load_index(&args.root)?;
    let (with, without) = ablate_fbs(&index, cfg, &eval_options(&args.output, &args.solver))?;
    print_failures(&with);
    write_report(&args.output.out_dir, "ablate_fbs_with", &with)?;
    write_report(&args.output.out_dir, "ablate_fbs_without", &without)?;
    let table = ablation_csv([("with_fbs".to_string(), &with), ("without_fbs".to_string(), &without)]);
    fs::write(args.output.out_dir.join("ablate_fbs.csv"), &table)?;
    print!("{table}");
    check_reports([&with, &without], args.solver.strict)
}

pub fn run_grid_info(args: &GridInfoArgs, cfg: &SolverConfig) -> CmdResult {
    let img = load_image(&args.image)?;
    let (part, graph) = build_superpixels(&img, cfg)?;
    let (grid, report) = build_grid(&img, cfg)?;
    if args.solver.strict {
        report.check(cfg.bistochastic_tol)?;
    }
    let info = json!({
        "width": img.width(),
        "height": img.height(),
        "pixels": img.pixel_count(),
        "superpixels": part.len(),
        "superpixel_edges": graph.edges().len(),
        "grid_vertices": grid.vertex_count(),
        "pixels_per_vertex": img.pixel_count() as f64 / grid.vertex_count() as f64,
        "bistochastic": report,
        "config": config_echo(cfg),
    });
    println!("{}", serde_json::to_string_pretty(&info).expect("info serializes"));
    Ok(())
}
