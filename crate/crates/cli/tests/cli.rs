use dcanvas::io::save_png;
use dcanvas::DigitalImage;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcanvas"))
}

fn tempdir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("dcanvas-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn digit(size: usize, shift: usize, bar: bool) -> DigitalImage {
    let mut px = vec![0.0; size * size];
    for i in 2..size - 2 {
        px[i * size + 3 + shift] = 1.0;
        if bar {
            px[3 * size + i] = 0.8;
        }
    }
    DigitalImage::new(size, size, px).unwrap()
}

fn fast_config(dir: &Path, size: usize) -> PathBuf {
    let out = run(&["config", "--size", &size.to_string()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap().replace("max_iterations = 50", "max_iterations = 10");
    let p = dir.join("fast.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn distance_of_image_to_itself() {
    let dir = tempdir("self");
    let a = dir.join("a.png");
    save_png(&digit(12, 0, true), &a).unwrap();
    for mode in ["dc", "dv"] {
        let v = json(&run(&["distance", s(&a), s(&a), "--mode", mode]));
        assert!(v["distance"].as_f64().unwrap() <= 1e-6, "{v}");
        assert_eq!(v["mode"], mode);
    }
}

#[test]
fn error_exit_codes() {
    let dir = tempdir("codes");
    let a = dir.join("a.png");
    let b = dir.join("b.png");
    save_png(&digit(12, 0, false), &a).unwrap();
    save_png(&digit(14, 0, false), &b).unwrap();
    let missing = dir.join("nope.png");
    assert_eq!(run(&["distance", s(&a), s(&missing)]).status.code(), Some(2));
    assert_eq!(run(&["distance", s(&a), s(&b)]).status.code(), Some(1));
    assert_eq!(run(&["distance", s(&a)]).status.code(), Some(1));
    std::fs::write(dir.join("bad.toml"), "mode = \"dc\"\nstages = []\n").unwrap();
    assert_eq!(run(&["distance", s(&a), s(&a), "--config", s(&dir.join("bad.toml"))]).status.code(), Some(1));
    std::fs::write(dir.join("junk.png"), b"not a png").unwrap();
    assert_eq!(run(&["distance", s(&a), s(&dir.join("junk.png"))]).status.code(), Some(2));
    assert_eq!(run(&["benchmark", "mnist", "--data-dir", s(&dir)]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn diagnostics_file_is_written() {
    let dir = tempdir("diag");
    let (a, b) = (dir.join("a.png"), dir.join("b.png"));
    save_png(&digit(12, 0, true), &a).unwrap();
    save_png(&digit(12, 2, true), &b).unwrap();
    let d = dir.join("d.json");
    let v = json(&run(&["distance", s(&a), s(&b), "--diagnostics", s(&d)]));
    assert!(v["dc_value"].as_f64().unwrap() >= 0.0);
    let diag: Value = serde_json::from_str(&std::fs::read_to_string(&d).unwrap()).unwrap();
    let stages = dcanvas::SolveConfig::for_size(12, dcanvas::View::Dc).stages.len();
    assert_eq!(diag["stages"].as_array().unwrap().len(), stages);
}

#[test]
fn flow_frames_and_final_dc() {
    let dir = tempdir("flow");
    let (a, b) = (dir.join("a.png"), dir.join("b.png"));
    save_png(&digit(12, 0, true), &a).unwrap();
    save_png(&digit(12, 3, true), &b).unwrap();
    let out = dir.join("frames");
    let v = json(&run(&["flow", s(&a), s(&b), "--out", s(&out), "--stride", "4", "--gif"]));
    let iters = v["iterations"].as_u64().unwrap() as usize;
    let frames = v["frames"].as_u64().unwrap() as usize;
    assert_eq!(frames, iters.div_ceil(4) + 1);
    let diff = (v["final_frame_dc"].as_f64().unwrap() - v["dc_value"].as_f64().unwrap()).abs();
    assert!(diff <= 1e-9);
    let pngs = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count();
    assert_eq!(pngs, frames);
    assert!(out.join("frame_000.png").exists());
    assert!(out.join("flow.gif").exists());
}

#[test]
fn config_round_trips_through_distance() {
    let dir = tempdir("config");
    let out = run(&["config", "--size", "12", "--mode", "dv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mode = \"dv\""), "{text}");
    let full = String::from_utf8(run(&["config", "--full"]).stdout).unwrap();
    assert_eq!(full.matches("[[stages]]").count(), 4);
    let p = dir.join("c.toml");
    std::fs::write(&p, &text).unwrap();
    let a = dir.join("a.png");
    save_png(&digit(12, 1, false), &a).unwrap();
    let v = json(&run(&["distance", s(&a), s(&a), "--config", s(&p)]));
    assert_eq!(v["mode"], "dv");
    assert_eq!(run(&["config", "--size", "1"]).status.code(), Some(1));
}

fn write_idx(dir: &Path, prefix: &str, images: &[DigitalImage], labels: &[u8]) {
    let (r, c) = images[0].dims();
    let mut img = vec![0, 0, 8, 3];
    for d in [images.len(), r, c] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for im in images {
        img.extend(im.pixels().iter().map(|&v| (v * 255.0).round() as u8));
    }
    std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), img).unwrap();
    let mut lab = vec![0, 0, 8, 1];
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), lab).unwrap();
}

#[test]
fn benchmark_on_small_idx() {
    let dir = tempdir("bench");
    let train: Vec<_> = (0..4).map(|i| digit(10, i % 2 * 2, i < 2)).collect();
    write_idx(&dir, "train", &train, &[0, 1, 0, 1]);
    let test: Vec<_> = (0..10).map(|i| digit(10, i % 3, i % 2 == 0)).collect();
    write_idx(&dir, "t10k", &test, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    let cfg = fast_config(&dir, 10);
    let csv = dir.join("m.csv");
    let v = json(&run(&["benchmark", "mnist", "--data-dir", s(&dir), "--n-max", "2", "--config", s(&cfg), "--matrix-csv", s(&csv), "--workers", "2"]));
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["predictions"].as_array().unwrap().len(), 10);
    assert_eq!(v["dataset"], "mnist");
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 10);
    assert_eq!(rows.lines().next().unwrap().split(',').count(), 4);
    let limited = json(&run(&["benchmark", "emnist", "--data-dir", s(&dir), "--test-limit", "3", "--config", s(&cfg)]));
    assert_eq!(limited["test_count"], 3);
}

#[test]
fn omniglot_layout_counts_tasks() {
    let dir = tempdir("omni");
    let size = 10;
    for r in 1..=2 {
        let run_dir = dir.join(format!("run{r:02}"));
        std::fs::create_dir_all(run_dir.join("training")).unwrap();
        std::fs::create_dir_all(run_dir.join("test")).unwrap();
        let mut key = String::new();
        for c in 0..20 {
            let img = digit(size, c % 4, c % 5 < 2).inverted();
            save_png(&img, &run_dir.join("training").join(format!("class{:02}.png", c + 1))).unwrap();
            save_png(&img, &run_dir.join("test").join(format!("item{:02}.png", c + 1))).unwrap();
            key.push_str(&format!("run{r:02}/test/item{:02}.png run{r:02}/training/class{:02}.png\n", c + 1, c + 1));
        }
        std::fs::write(run_dir.join("class_labels.txt"), key).unwrap();
    }
    let cfg = fast_config(&dir, size);
    let v = json(&run(&["omniglot", "--runs-dir", s(&dir), "--runs", "1..2", "--size", &size.to_string(), "--config", s(&cfg)]));
    assert_eq!(v["tasks"], 40);
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    assert!(v["error_rate"].as_f64().unwrap() <= 1.0);
}

#[test]
fn cluster_is_deterministic() {
    let dir = tempdir("cluster");
    let input = dir.join("in");
    for (i, img) in [digit(10, 0, false), digit(10, 0, false), digit(10, 2, true), digit(10, 2, true)].iter().enumerate() {
        std::fs::create_dir_all(input.join("x")).unwrap();
        save_png(img, &input.join("x").join(format!("{i}.png"))).unwrap();
    }
    let cfg = fast_config(&dir, 10);
    let args = |out: &Path| {
        run(&["cluster", "--input", s(&input), "--k", "2", "--seed", "7", "--restarts", "2", "--config", s(&cfg), "--out", s(out)])
    };
    let (o1, o2) = (dir.join("o1"), dir.join("o2"));
    let first = args(&o1);
    let second = args(&o2);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(std::fs::read(o1.join("report.json")).unwrap(), std::fs::read(o2.join("report.json")).unwrap());
    assert!(o1.join("k2_archetype_0.png").exists());
    assert!(o1.join("k2_archetype_1.png").exists());
    let v: Value = serde_json::from_slice(&first.stdout).unwrap();
    let a = v["reports"][0]["assignments"].as_array().unwrap();
    assert_eq!(a[0], a[1]);
    assert_eq!(a[2], a[3]);
    assert_ne!(a[0], a[2]);
    assert_eq!(run(&["cluster", "--input", s(&input), "--k", "5", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn identical_flow_frames_are_equal() {
    let dir = tempdir("same");
    let a = dir.join("a.png");
    save_png(&digit(12, 1, true), &a).unwrap();
    let out = dir.join("frames");
    let v = json(&run(&["flow", s(&a), s(&a), "--out", s(&out)]));
    let frames = v["frames"].as_u64().unwrap() as usize;
    assert!(frames >= 1);
    let first = std::fs::read(out.join("frame_000.png")).unwrap();
    for k in 1..frames {
        assert_eq!(std::fs::read(out.join(format!("frame_{k:03}.png"))).unwrap(), first);
    }
}

#[test]
fn default_28_pair_under_five_seconds() {
    let dir = tempdir("timing");
    let (a, b) = (dir.join("a.png"), dir.join("b.png"));
    save_png(&digit(28, 0, true), &a).unwrap();
    save_png(&digit(28, 4, false), &b).unwrap();
    let start = std::time::Instant::now();
    json(&run(&["distance", s(&a), s(&b)]));
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn shipped_default_config_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("config").join("default-28.toml");
    let shipped = dcanvas::SolveConfig::load(&path).unwrap();
    assert_eq!(shipped, dcanvas::SolveConfig::default_28(dcanvas::View::Dc));
    let printed = String::from_utf8(run(&["config"]).stdout).unwrap();
    assert_eq!(dcanvas::SolveConfig::from_toml_str(&printed).unwrap(), shipped);
}
