use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geoseg::image::{load_image, save_image, save_scribbles};
use geoseg::segmenter::SolverConfig;
use geoseg::{ImageBuffer, Label, ScribbleMap};
use geoseg_harness::synthetic::{generate_suite, SuiteSpec};
use geoseg_harness::write_dataset;

fn geoseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoseg"))
        .args(args)
        .env_remove("GEOSEG_CONFIG")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Left half red-ish, right half blue-ish, one stroke in each half.
fn write_split(dir: &Path, with_bg: bool) -> (String, String) {
    let img = ImageBuffer::from_fn(40, 30, |x, _| if x < 20 { [200, 40, 40] } else { [30, 60, 210] });
    let mut s = ScribbleMap::new(40, 30);
    for y in 10..20 {
        s.set(5, y, Label::Foreground);
        if with_bg {
            s.set(34, y, Label::Background);
        }
    }
    let (ip, sp) = (dir.join("img.png"), dir.join("scr.png"));
    save_image(&img, &ip).unwrap();
    save_scribbles(&s, &sp).unwrap();
    (ip.to_str().unwrap().into(), sp.to_str().unwrap().into())
}

#[test]
fn segment_writes_mask_with_input_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let (img, scr) = write_split(dir.path(), true);
    let out = dir.path().join("mask.png");
    let o = geoseg(&["segment", &img, &scr, "-o", out.to_str().unwrap(), "--superpixels", "64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mask = load_image(&out).unwrap();
    assert_eq!((mask.width(), mask.height()), (40, 30));
    assert_eq!(mask.pixel(2, 2), [255, 255, 255]);
    assert_eq!(mask.pixel(38, 2), [0, 0, 0]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("wall_time=") && stdout.contains("outer_iters="));
}

#[test]
fn missing_class_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (img, scr) = write_split(dir.path(), false);
    let o = geoseg(&["segment", &img, &scr, "-o", dir.path().join("m.png").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("MissingSeeds: "));
}

#[test]
fn missing_input_exits_2() {
    let o = geoseg(&["segment", "/no/such/image.png", "/no/such/scribbles.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("FileNotFound: "));
}

#[test]
fn debug_dump_echoes_paper_settings() {
    let dir = tempfile::tempdir().unwrap();
    let (img, scr) = write_split(dir.path(), true);
    let out = dir.path().join("mask.png");
    let dbg = dir.path().join("debug");
    let o = geoseg(&[
        "segment",
        &img,
        &scr,
        "-o",
        out.to_str().unwrap(),
        "--theta",
        "0.1",
        "--lambda",
        "100",
        "--superpixels",
        "1600",
        "--dump-debug",
        dbg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["superpixels.png", "f1.png", "f2.png", "u.png", "v.png", "trace.json"] {
        assert!(dbg.join(f).is_file(), "{f} missing");
    }
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(dbg.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["config"]["theta"], 0.1);
    assert_eq!(trace["config"]["lambda"], 100.0);
    assert_eq!(trace["config"]["k_target"], 1600);
    assert!(!trace["energy_trace"].as_array().unwrap().is_empty());
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (img, scr) = write_split(dir.path(), true);
    let cfg = dir.path().join("solver.conf");
    fs::write(&cfg, "# test config\nlambda = 5\ntheta = 0.2\n").unwrap();
    let dbg = dir.path().join("d");
    let run = |extra: &[&str], env: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_geoseg"));
        cmd.args(["segment", &img, &scr, "-o", dir.path().join("m.png").to_str().unwrap()])
            .args(["--superpixels", "64", "--dump-debug", dbg.to_str().unwrap()])
            .args(extra)
            .env_remove("GEOSEG_CONFIG");
        if let Some(p) = env {
            cmd.env("GEOSEG_CONFIG", p);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(dbg.join("trace.json")).unwrap()).unwrap();
        (t["config"]["lambda"].as_f64().unwrap(), t["config"]["theta"].as_f64().unwrap())
    };
    assert_eq!(run(&[], None), (100.0, 0.1));
    assert_eq!(run(&["--config", cfg.to_str().unwrap()], None), (5.0, 0.2));
    assert_eq!(run(&[], Some(&cfg)), (5.0, 0.2));
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "--lambda", "7"], None), (7.0, 0.2));
    // A flag given explicitly at its default value still wins over the file.
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "--lambda", "100"], None), (100.0, 0.2));
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (img, scr) = write_split(dir.path(), true);
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"lambda": 1, "no_such_key": 2}"#).unwrap();
    let o = geoseg(&["segment", &img, &scr, "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("InvalidConfig: "));
}

fn dataset(dir: &Path, count: usize) {
    write_dataset(&generate_suite(&SuiteSpec { count, size: 48, ..Default::default() }), dir).unwrap();
}

#[test]
fn eval_writes_row_per_image_and_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    dataset(&root, 5);
    let mut bodies = Vec::new();
    for workers in ["1", "4"] {
        let out = dir.path().join(format!("out{workers}"));
        let o = geoseg(&[
            "eval",
            root.to_str().unwrap(),
            "--superpixels",
            "64",
            "--workers",
            workers,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 5 + 1);
        assert!(csv.lines().last().unwrap().starts_with("MEAN,"));
        assert!(out.join("eval.json").is_file());
        bodies.push(csv);
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn eval_of_unreadable_or_empty_root_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoseg(&["eval", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    for d in ["images", "scribbles", "gt"] {
        fs::create_dir(dir.path().join(d)).unwrap();
    }
    let o = geoseg(&["ablate-fbs", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("EmptyDataset: "));
}

#[test]
fn eval_where_every_image_fails_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 1);
    fs::write(dir.path().join("images/synthetic_000.png"), b"garbage").unwrap();
    let out = dir.path().join("out");
    let o = geoseg(&["eval", dir.path().to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).lines().last().unwrap().starts_with("AllFailed: "));
    assert!(out.join("eval.csv").is_file());
}

#[test]
fn ablate_fbs_emits_both_rows() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    dataset(&root, 2);
    let out = dir.path().join("out");
    let o = geoseg(&["ablate-fbs", root.to_str().unwrap(), "--superpixels", "64", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("ablate_fbs.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("with_fbs,") && rows[2].starts_with("without_fbs,"));
}

#[test]
fn ablate_k_emits_row_per_count() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    dataset(&root, 2);
    let out = dir.path().join("out");
    let o = geoseg(&["ablate-k", root.to_str().unwrap(), "--k-list", "16,64", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("ablate_k.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(out.join("ablate_k_16.json").is_file() && out.join("ablate_k_64.csv").is_file());

    let o = geoseg(&["ablate-k", root.to_str().unwrap(), "--k-list", "64,16", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("InvalidParameter: "));
}

#[test]
fn grid_info_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = write_split(dir.path(), true);
    let o = geoseg(&["grid-info", &img, "--superpixels", "12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let info: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(info["pixels"], 1200);
    assert!(info["grid_vertices"].as_u64().unwrap() >= 2);
    assert!(info["superpixels"].as_u64().unwrap() >= 2);
}

#[test]
fn help_lists_every_flag_with_library_defaults() {
    let d = SolverConfig::default();
    let seg = String::from_utf8(geoseg(&["segment", "--help"]).stdout).unwrap();
    let eval = String::from_utf8(geoseg(&["eval", "--help"]).stdout).unwrap();
    for flag in [
        "--lambda",
        "--theta",
        "--superpixels",
        "--sigma-xy",
        "--sigma-l",
        "--sigma-uv",
        "--threshold",
        "--unary",
        "--u-step",
        "--dump-debug",
        "--config",
        "--strict",
    ] {
        assert!(seg.contains(flag), "segment --help lacks {flag}");
    }
    for flag in ["--workers", "--boundary-tol", "--config", "--strict", "--lambda"] {
        assert!(eval.contains(flag), "eval --help lacks {flag}");
    }
    let default_of = |flag: &str| -> String {
        let line = seg.lines().find(|l| l.trim_start().starts_with(flag)).unwrap();
        let start = line.find("[default: ").unwrap() + "[default: ".len();
        line[start..line.len() - 1].to_string()
    };
    assert_eq!(default_of("--lambda").parse::<f64>().unwrap(), d.lambda);
    assert_eq!(default_of("--theta").parse::<f64>().unwrap(), d.theta);
    assert_eq!(default_of("--superpixels").parse::<usize>().unwrap(), d.k_target);
    assert_eq!(default_of("--sigma-xy").parse::<f64>().unwrap(), d.sigma_xy);
    assert_eq!(default_of("--sigma-l ").parse::<f64>().unwrap(), d.sigma_l);
    assert_eq!(default_of("--sigma-uv").parse::<f64>().unwrap(), d.sigma_uv);
    assert_eq!(default_of("--threshold").parse::<f64>().unwrap(), d.threshold);
    assert_eq!(default_of("--unary"), d.unary_mode.to_string());
    assert_eq!(default_of("--u-step"), d.u_step.to_string());
}

#[test]
fn strict_turns_solver_non_convergence_into_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let (img, scr) = write_split(dir.path(), true);
    let cfg = dir.path().join("tight.conf");
    fs::write(&cfg, "cg_max_iters = 1\ncg_tol = 1e-14\n").unwrap();
    let m = dir.path().join("m.png");
    let base = ["segment", &img, &scr, "-o", m.to_str().unwrap(), "--config", cfg.to_str().unwrap()];
    assert!(geoseg(&base).status.success());
    let mut strict = base.to_vec();
    strict.push("--strict");
    let o = geoseg(&strict);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("CgNonConvergence: "));
}
