//! End-to-end runs of the `saliqa` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use saliqa::RasterImage;

fn saliqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saliqa"))
        .args(args)
        .env_remove("SALIQA_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = saliqa(args);
    assert!(
        out.status.success(),
        "saliqa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gradient_image(w: usize, h: usize, channels: usize, phase: f64) -> RasterImage {
    let data = (0..w * h * channels)
        .map(|i| ((i as f64 * 0.37 + phase).sin() + 1.0) / 2.0)
        .collect();
    RasterImage::new(w, h, channels, data).unwrap()
}

fn write_ftns(path: &Path, k: u32, h: u32, w: u32, values: &[f32]) {
    let mut bytes = b"FTNS".to_vec();
    for v in [1u32, k, h, w] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).unwrap();
}

fn manifest_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (24, 20);
    gradient_image(w, h, 3, 0.0).save_png(dir.path().join("ref.png")).unwrap();
    gradient_image(w, h, 3, 0.4).save_png(dir.path().join("d1.png")).unwrap();
    gradient_image(w, h, 3, 0.9).save_png(dir.path().join("d2.png")).unwrap();
    gradient_image(w, h, 3, 1.5).save_png(dir.path().join("d3.png")).unwrap();
    ok(&[
        "center-prior",
        "--width",
        "12",
        "--height",
        "10",
        "--out",
        s(&dir.path().join("sal.png")),
    ]);
    fs::write(
        dir.path().join("manifest.csv"),
        "record_id,reference_path,distorted_path,saliency_path,fixations_path,group_id,preset,bpp,mos\n\
         a,ref.png,d1.png,sal.png,,g,q1,0.5,3.0\n\
         b,ref.png,d2.png,sal.png,,g,q2,0.3,2.0\n\
         c,ref.png,d3.png,sal.png,,g,q3,0.1,1.0\n",
    )
    .unwrap();
    dir
}

#[test]
fn metrics_and_correlate() {
    let dir = manifest_dir();
    let report = dir.path().join("report.csv");
    ok(&[
        "metrics",
        "--manifest",
        s(&dir.path().join("manifest.csv")),
        "--metrics",
        "psnr,ssim,ew-psnr",
        "--out",
        s(&report),
        "--threads",
        "2",
    ]);
    let text = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "{text}");
    assert!(lines[0].starts_with("record_id"));
    assert!(lines[0].contains("psnr") && lines[0].contains("ew-psnr"));
    assert!(lines[1].starts_with("a,"));

    let corr = dir.path().join("corr.csv");
    ok(&[
        "correlate",
        "--report",
        s(&report),
        "--manifest",
        s(&dir.path().join("manifest.csv")),
        "--out",
        s(&corr),
    ]);
    let text = fs::read_to_string(&corr).unwrap();
    assert!(text.starts_with("metric,n,srocc,plcc,fraccp\n"), "{text}");
    assert_eq!(text.lines().count(), 4);

    // deterministic across runs and thread counts
    let again = dir.path().join("again.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_saliqa"))
        .args([
            "metrics",
            "--manifest",
            s(&dir.path().join("manifest.csv")),
            "--metrics",
            "psnr,ssim,ew-psnr",
            "--out",
            s(&again),
        ])
        .env("SALIQA_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&report).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn metrics_rejects_bad_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "record_id,reference_path\nx,missing.png\n").unwrap();
    let out = saliqa(&[
        "metrics",
        "--manifest",
        s(&manifest),
        "--out",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("distorted_path"));
}

#[test]
fn mask_zero_fraction_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("photo.png");
    gradient_image(16, 12, 3, 0.2).save_png(&image).unwrap();
    let map = dir.path().join("map.png");
    gradient_image(16, 12, 1, 2.0).save_png(&map).unwrap();
    let out_dir = dir.path().join("masked");
    let out = ok(&[
        "mask",
        "--image",
        s(&image),
        "--map",
        s(&map),
        "--strategy",
        "morf",
        "--fractions",
        "0",
        "--out-dir",
        s(&out_dir),
    ]);
    let files: Vec<_> = fs::read_dir(&out_dir).unwrap().collect();
    assert_eq!(files.len(), 1);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("photo__morf__f0__black.png"), "{stdout}");
    let original = saliqa::image_core::load_image(&image).unwrap();
    let masked = saliqa::image_core::load_image(out_dir.join("photo__morf__f0__black.png")).unwrap();
    assert_eq!(original.data(), masked.data());
}

#[test]
fn mask_default_grid_writes_eleven_frames() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("img.png");
    gradient_image(20, 20, 3, 0.0).save_png(&image).unwrap();
    let map = dir.path().join("map.png");
    gradient_image(20, 20, 1, 1.0).save_png(&map).unwrap();
    let out_dir = dir.path().join("out");
    let out = ok(&[
        "mask",
        "--image",
        s(&image),
        "--map",
        s(&map),
        "--strategy",
        "lerf",
        "--fill",
        "mean",
        "--blur-kernel",
        "5",
        "--blur-sigma",
        "1",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(fs::read_dir(&out_dir).unwrap().count(), 11);
    // header plus one line per frame
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 12);
}

#[test]
fn aggregate_three_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("votes.csv");
    fs::write(
        &votes,
        "session_id,left_id,right_id,outcome,is_verification,expected_outcome\n\
         s1,A,B,left,0,\n\
         s1,A,B,left,0,\n\
         s1,B,A,right,0,\n\
         s1,A,B,right,0,\n",
    )
    .unwrap();
    let out = dir.path().join("scores.csv");
    ok(&["aggregate", "--votes", s(&votes), "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let score = |id: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(&format!("{id},")))
            .and_then(|l| l.split(',').nth(1))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((score("A") - score("B") - 3.0_f64.ln()).abs() < 1e-5, "{text}");
}

#[test]
fn aggregate_rejects_disconnected_votes() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("votes.csv");
    fs::write(
        &votes,
        "session_id,left_id,right_id,outcome,is_verification,expected_outcome\n\
         s1,A,B,left,0,\n\
         s1,B,A,left,0,\n\
         s1,C,D,left,0,\n\
         s1,D,C,left,0,\n",
    )
    .unwrap();
    let out = saliqa(&["aggregate", "--votes", s(&votes), "--out", s(&dir.path().join("o.csv"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('A') && err.contains('C'), "{err}");
}

#[test]
fn aopc_from_curve() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    fs::write(&curve, "fraction,score\n0.0,10\n0.5,6\n1.0,4\n").unwrap();
    let out = dir.path().join("aopc.json");
    ok(&["aopc", "--curve", s(&curve), "--out", s(&out)]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!((json["aopc"].as_f64().unwrap() - 5.0).abs() < 1e-12, "{json}");
    assert_eq!(json["baseline"].as_f64(), Some(10.0));
}

#[test]
fn gradcam_and_svd_maps() {
    let dir = tempfile::tempdir().unwrap();
    let (k, h, w) = (2u32, 3u32, 4u32);
    let features: Vec<f32> = (0..k * h * w).map(|i| (i as f32 * 0.7).cos()).collect();
    let gradients: Vec<f32> = (0..k * h * w).map(|i| (i as f32 * 0.3).sin()).collect();
    write_ftns(&dir.path().join("f.ftns"), k, h, w, &features);
    write_ftns(&dir.path().join("g.ftns"), k, h, w, &gradients);

    let cam = dir.path().join("cam.png");
    ok(&[
        "gradcam",
        "--features",
        s(&dir.path().join("f.ftns")),
        "--gradients",
        s(&dir.path().join("g.ftns")),
        "--mode",
        "elementwise",
        "--out",
        s(&cam),
    ]);
    let img = saliqa::image_core::load_image(&cam).unwrap();
    assert_eq!((img.width(), img.height()), (4, 3));

    let svd = dir.path().join("svd.png");
    ok(&[
        "svd-map",
        "--features",
        s(&dir.path().join("f.ftns")),
        s(&dir.path().join("f.ftns")),
        "--out",
        s(&svd),
    ]);
    assert!(svd.exists());

    fs::write(dir.path().join("bad.ftns"), b"nope").unwrap();
    let out = saliqa(&["svd-map", "--features", s(&dir.path().join("bad.ftns")), "--out", s(&svd)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn salmetrics_pairs_by_stem() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    gradient_image(10, 8, 1, 0.0).save_png(pred.join("x.png")).unwrap();
    gradient_image(10, 8, 1, 0.0).save_png(gt.join("x.png")).unwrap();
    let out = dir.path().join("sal.csv");
    ok(&[
        "salmetrics",
        "--pred-dir",
        s(&pred),
        "--gt-dir",
        s(&gt),
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("x,"));
}

#[test]
fn usage_errors() {
    assert_eq!(saliqa(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(saliqa(&["center-prior", "--width", "3"]).status.code(), Some(1));
    assert!(saliqa(&["--help"]).status.success());
    let out = saliqa(&[
        "center-prior",
        "--width",
        "0",
        "--height",
        "4",
        "--out",
        "/tmp/never-written.png",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
