use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn minl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minl"))
        .args(args)
        .output()
        .expect("run minl")
}

fn ok(args: &[&str]) -> String {
    let out = minl(args);
    assert!(
        out.status.success(),
        "minl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    /// A 10x8 synthetic scene with 5x5 micro-images.
    fn scene(&self) -> String {
        let p = self.path("scene.png");
        ok(&["--quiet", "synth", "--out", &p, "--dims", "10x8", "--mi-size", "5"]);
        p
    }
}

const SMALL: [&str; 9] = [
    "--quiet",
    "--set",
    "arch.width=10",
    "--set",
    "train.epochs=3",
    "--set",
    "train.batch_size=16",
    "--set",
    "train.finetune_epochs=1",
];

fn with_small<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = SMALL.to_vec();
    v.extend_from_slice(rest);
    v
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = minl(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let out = minl(&["--set", "train.nope=1", "synth", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let ws = Workspace::new();
    let out = minl(&["--quiet", "fit", "--input", &ws.path("absent.png"), "--out", &ws.path("m.ckpt")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn resolved_config_is_echoed() {
    let ws = Workspace::new();
    let out = minl(&["--set", "train.epochs=7", "synth", "--out", &ws.path("s.png"), "--dims", "4x4", "--mi-size", "3"]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train.epochs=7"), "{err}");
    assert!(err.contains("arch.omega=30"), "{err}");
}

#[test]
fn config_file_then_overrides() {
    let ws = Workspace::new();
    let cfg: PathBuf = ws.dir.path().join("run.cfg");
    std::fs::write(&cfg, "# desk\ntrain.epochs = 9\narch.width=12\n").unwrap();
    let out = minl(&[
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "arch.width=14",
        "synth",
        "--out",
        &ws.path("s.png"),
        "--dims",
        "4x4",
        "--mi-size",
        "3",
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train.epochs=9"));
    assert!(err.contains("arch.width=14"));
}

#[test]
fn eval_of_identical_files() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let j = json(&["--quiet", "eval", "--recon", &scene, "--gt", &scene, "--mi-size", "5"]);
    assert_eq!(j["psnr_db"], "inf");
    assert_eq!(j["ssim"], 1.0);
    assert_eq!(j["dims"], serde_json::json!([10, 8, 5]));
}

#[test]
fn fit_compress_decompress_decode_eval() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let ckpt = ws.path("m.ckpt");
    let hist = ws.path("hist.csv");
    let fit = json(&with_small(&[
        "fit", "--input", &scene, "--mi-size", "5", "--out", &ckpt, "--history", &hist,
    ]));
    assert_eq!(fit["width"], 10);
    assert_eq!(fit["dims"], serde_json::json!([10, 8, 5]));
    let csv = std::fs::read_to_string(&hist).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let stream = ws.path("m.minl");
    let c = json(&with_small(&["compress", "--model", &ckpt, "--out", &stream]));
    let bytes = std::fs::read(&stream).unwrap();
    assert_eq!(&bytes[..4], b"MINL");
    assert_eq!(c["stream_bytes"], bytes.len());
    assert!(c["entropy_coded_bits"].as_u64().unwrap() <= c["fixed_width_bits"].as_u64().unwrap());

    let back = ws.path("back.ckpt");
    ok(&["--quiet", "decompress", "--in", &stream, "--out", &back]);
    let from_ckpt = ws.path("a.png");
    let from_stream = ws.path("b.png");
    let from_back = ws.path("c.png");
    ok(&["--quiet", "decode", "--model", &ckpt, "--dims", "10x8", "--out", &from_ckpt]);
    ok(&["--quiet", "decode", "--model", &stream, "--dims", "10x8", "--out", &from_stream]);
    ok(&["--quiet", "decode", "--model", &back, "--dims", "10x8", "--out", &from_back]);
    assert_eq!(std::fs::read(&from_stream).unwrap(), std::fs::read(&from_back).unwrap());

    let e = json(&[
        "--quiet", "eval", "--recon", &from_stream, "--gt", &scene, "--stream", &stream, "--mi-size", "5",
    ]);
    assert!(e["psnr_db"].as_f64().unwrap() > 5.0);
    let bpp = e["bpp"].as_f64().unwrap();
    assert!((bpp - 8.0 * bytes.len() as f64 / (10.0 * 8.0 * 25.0)).abs() < 1e-9);
}

#[test]
fn compress_finetune_needs_input() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let ckpt = ws.path("m.ckpt");
    ok(&with_small(&["fit", "--input", &scene, "--mi-size", "5", "--out", &ckpt]));
    let out = minl(&with_small(&["compress", "--model", &ckpt, "--out", &ws.path("x.minl"), "--finetune"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_with_budget_and_region() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let ckpt = ws.path("m.ckpt");
    let j = json(&with_small(&[
        "fit", "--input", &scene, "--mi-size", "5", "--crop", "3", "--region", "1,1,6,4", "--budget", "6k", "--out",
        &ckpt,
    ]));
    assert_eq!(j["dims"], serde_json::json!([6, 4, 3]));
    assert!(j["model_bytes"].as_u64().unwrap() <= 6 * 1024);
}

#[test]
fn corrupt_stream_is_rejected() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let ckpt = ws.path("m.ckpt");
    let stream = ws.path("m.minl");
    ok(&with_small(&["fit", "--input", &scene, "--mi-size", "5", "--out", &ckpt]));
    ok(&with_small(&["compress", "--model", &ckpt, "--out", &stream]));
    let mut bytes = std::fs::read(&stream).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&stream, &bytes).unwrap();
    let out = minl(&["--quiet", "decompress", "--in", &stream, "--out", &ws.path("x.ckpt")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn noise_denoise_and_bench() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let noisy = ws.path("noisy.png");
    let n = json(&["--quiet", "--set", "noise.kind=pulse", "noise", "--input", &scene, "--out", &noisy, "--mi-size", "5", "--target-psnr", "20"]);
    assert_eq!(n["kind"], "pulse");
    assert!((n["psnr_db"].as_f64().unwrap() - 20.0).abs() < 0.5);

    let d = json(&with_small(&[
        "denoise", "--input", &noisy, "--gt", &scene, "--mi-size", "5", "--budget", "8k",
    ]));
    for key in ["average", "median", "gaussian"] {
        assert!(d["filters"][key]["psnr_db"].is_number());
    }
    assert!(d["noisy"]["psnr_db"].is_number());
    assert!(d["minl"]["ssim"].is_number());

    let ckpt = ws.path("m.ckpt");
    ok(&with_small(&["fit", "--input", &scene, "--mi-size", "5", "--out", &ckpt]));
    let b = json(&["--quiet", "bench", "--model", &ckpt, "--dims", "10x8", "--runs", "1"]);
    assert_eq!(b["mi_wise_evaluations"], 80);
    assert_eq!(b["pixel_wise_evaluations"], 80 * 25);
}

#[test]
fn rd_writes_csv() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let out = ws.path("rd.csv");
    let printed = ok(&with_small(&[
        "rd", "--input", &scene, "--mi-size", "5", "--budgets", "6k,8k", "--out", &out,
    ]));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(printed, csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "budget_bytes,bpp,psnr_db,ssim,stream_bytes");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("6144,"));
}

#[test]
fn fit_is_deterministic() {
    let ws = Workspace::new();
    let scene = ws.scene();
    let a = ws.path("a.ckpt");
    let b = ws.path("b.ckpt");
    ok(&with_small(&["--seed", "5", "fit", "--input", &scene, "--mi-size", "5", "--out", &a]));
    ok(&with_small(&["--seed", "5", "fit", "--input", &scene, "--mi-size", "5", "--out", &b]));
    assert_eq!(std::fs::read(Path::new(&a)).unwrap(), std::fs::read(Path::new(&b)).unwrap());
    let c = ws.path("c.ckpt");
    ok(&with_small(&["--seed", "6", "fit", "--input", &scene, "--mi-size", "5", "--out", &c]));
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}
