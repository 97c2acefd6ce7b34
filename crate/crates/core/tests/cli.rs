use std::path::Path;
use std::process::{Command, Output};

use gridsynth::extrapolation::PartialImage;
use gridsynth::grid::GridImage;
use gridsynth::program::Program;
use serde_json::Value;

fn gridsynth(args: &[&str]) -> Output {
    gridsynth_env(args, &[])
}

fn gridsynth_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gridsynth"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Left half red, right half blue, on a 4×4 grid of 2-pixel cells.
fn halves() -> GridImage {
    GridImage::from_cells(4, 2, |c| {
        let rgb = if c.u <= 2 { [200, 30, 30] } else { [30, 30, 200] };
        rgb.repeat(4)
    })
    .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_writes_outputs_and_recovers_halves() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.png");
    halves().save_png(&img).unwrap();
    let out = dir.path().join("out");
    let o = gridsynth(&["synth", s(&img), "--grid-n", "4", "--lambda", "1", "--out", s(&out), "--render", "--trace"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["program.prog", "render.png", "trace.jsonl", "summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let rendered = GridImage::load_png(out.join("render.png"), 4, 2).unwrap();
    assert_eq!(rendered, halves());
    let p = Program::parse(&std::fs::read_to_string(out.join("program.prog")).unwrap()).unwrap();
    assert!(p.len() >= 2);
}

#[test]
fn uniform_image_synthesizes_without_error() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("flat.png");
    GridImage::filled(3, 4, [90, 90, 90]).unwrap().save_png(&img).unwrap();
    let out = dir.path().join("out");
    let o = gridsynth(&["synth", s(&img), "--grid-n", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.png");
    let out = dir.path().join("out");
    assert_eq!(code(&gridsynth(&["synth", s(&missing), "--grid-n", "3", "--out", s(&out)])), 2);

    // 8×6 image is not square
    let rect = dir.path().join("rect.png");
    image::RgbImage::new(8, 6).save(&rect).unwrap();
    assert_eq!(code(&gridsynth(&["synth", s(&rect), "--grid-n", "2", "--out", s(&out)])), 2);

    // side not divisible by N
    let img = dir.path().join("in.png");
    halves().save_png(&img).unwrap();
    assert_eq!(code(&gridsynth(&["synth", s(&img), "--grid-n", "3", "--out", s(&out)])), 2);

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = gridsynth(&["synth", s(&img), "--grid-n", "4", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn oracle_over_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.png");
    halves().save_png(&img).unwrap();
    let out = dir.path().join("out");
    let o = gridsynth(&["oracle", s(&img), "--grid-n", "4", "--k", "3", "--oracle-budget", "10", "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn settings_precedence_flag_file_env() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.png");
    halves().save_png(&img).unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\nk = 3\nlambda = 0.25\n").unwrap();
    let out = dir.path().join("out");
    let env = [("GRIDSYNTH_K", "7"), ("GRIDSYNTH_LAMBDA", "0.9"), ("GRIDSYNTH_EPS", "0.05"), ("GRIDSYNTH_THREADS", "2")];
    let o = gridsynth_env(
        &["synth", s(&img), "--grid-n", "4", "--config", s(&cfg), "--lambda", "0.5", "--out", s(&out)],
        &env,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&out.join("summary.json"));
    let settings = &summary["settings"];
    assert_eq!(settings["lambda"], "0.5");
    assert_eq!(settings["k"], "3");
    assert_eq!(settings["eps"], "0.05");
    assert!(settings.get("threads").is_none());
}

#[test]
fn complete_keeps_known_cells() {
    let dir = tempfile::tempdir().unwrap();
    let full = halves();
    let partial = PartialImage::occlude_bottom(&full, 0.5).unwrap();
    let (png, mask) = (dir.path().join("p.png"), dir.path().join("p.mask"));
    partial.save(&png, &mask).unwrap();
    let out = dir.path().join("out");
    let o = gridsynth(&["complete", s(&png), "--mask", s(&mask), "--grid-n", "4", "--lambda", "1", "--out", s(&out), "--extend-single"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let done = GridImage::load_png(out.join("completed.png"), 4, 2).unwrap();
    assert_eq!(done, full);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["extend_single"], true);
    assert_eq!(partial.known().count(), 8);
}

#[test]
fn gen_then_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = gridsynth(&["gen", "--out", s(&corpus), "--count", "3", "--cell-m", "4", "--no-noise", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(corpus.join("manifest.jsonl").exists());
    let report = dir.path().join("report");
    let o = gridsynth(&["eval", s(&corpus), "--out", s(&report), "--no-timing"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&report.join("report.json"));
    assert_eq!(r["report"]["instances"].as_array().unwrap().len(), 3);
    let lines = std::fs::read_to_string(report.join("instances.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
}
