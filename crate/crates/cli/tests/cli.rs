use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use image::{GrayImage, Luma};

fn dynbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynbo"))
        .args(args)
        .env_remove("DYNBO_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A bright 12px square on a gradient, moving one pixel right per frame.
fn write_sequence(dir: &Path, frames: u32) {
    let mut gt = String::new();
    for t in 0..frames {
        let (x0, y0) = (20 + t, 24);
        let img = GrayImage::from_fn(64, 64, |x, y| {
            let inside = (x0..x0 + 12).contains(&x) && (y0..y0 + 12).contains(&y);
            let v = if inside { 200 + ((x - x0) * 7 + (y - y0) * 3) % 50 } else { (x + 2 * y) % 90 };
            Luma([v as u8])
        });
        img.save(dir.join(format!("{:08}.png", t + 1))).unwrap();
        gt.push_str(&format!("{x0},{y0},12,12\n"));
    }
    fs::write(dir.join("groundtruth.txt"), gt).unwrap();
}

#[test]
fn gp_selftest_reports_every_suite() {
    let o = dynbo(&["gp-selftest", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
}

#[test]
fn bench_dop_writes_repeatable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = dynbo(&[
            "bench-dop",
            "--frames",
            "6",
            "--budget",
            "20",
            "--seed",
            "2",
            "--noise-sd",
            "0.05",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("mean error"));
        fs::read_to_string(out.join("dop.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a.lines().count(), 7);
    assert!(a.starts_with("frame,est_x,est_y,true_x,true_y,error,best_value\n"));
    assert_eq!(a, run("b"));
}

#[test]
fn track_and_baseline_write_reports() {
    let seq = tempfile::tempdir().unwrap();
    write_sequence(seq.path(), 4);
    let out = tempfile::tempdir().unwrap();
    let o = dynbo(&[
        "track",
        "--seq",
        seq.path().to_str().unwrap(),
        "--budget",
        "20",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(out.path().join("sdbta.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("frame,iou"));
    assert_eq!(trace.lines().count(), 4);
    let summary = fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with(",3,180"), "{summary}");

    let o = dynbo(&[
        "baseline-tm",
        "--seq",
        seq.path().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--format",
        "json",
        "--serial",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = fs::read_to_string(out.path().join("report.json")).unwrap();
    assert!(json.contains("\"tm.stride\""), "{json}");
}

#[test]
fn config_file_errors_are_reported() {
    let seq = tempfile::tempdir().unwrap();
    write_sequence(seq.path(), 2);
    let cfg = seq.path().join("bad.cfg");
    fs::write(&cfg, "tracker.budget = 3\n").unwrap();
    let o = dynbo(&[
        "track",
        "--seq",
        seq.path().to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        seq.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown key 'tracker.budget'"), "{}", stderr(&o));
}

#[test]
fn external_oracle_needs_an_endpoint() {
    let seq = tempfile::tempdir().unwrap();
    write_sequence(seq.path(), 2);
    let o = dynbo(&[
        "track",
        "--seq",
        seq.path().to_str().unwrap(),
        "--oracle",
        "external",
        "--out",
        seq.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--endpoint"), "{}", stderr(&o));
}
