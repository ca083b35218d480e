use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rlpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlpt")).args(args).output().unwrap()
}

fn render(dir: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec!["--scene", "door", "--width", "16", "--height", "12", "--spp", "3", "--probes", "64", "--mode", "rl"];
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    let o = rlpt(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read(out).unwrap()
}

#[test]
fn missing_scene_exits_with_usage_error() {
    let o = rlpt(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--scene"));
}

#[test]
fn unreadable_scene_fails_with_message() {
    let o = rlpt(&["--scene", "/nonexistent/scene.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/scene.json"));
}

#[test]
fn bad_values_are_rejected() {
    for args in [
        &["--scene", "door", "--strata", "8by16"][..],
        &["--scene", "door", "--grid", "4,4"],
        &["--scene", "door", "--mode", "fast"],
        &["--scene", "door", "--alpha", "const:x"],
    ] {
        let o = rlpt(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let o = rlpt(&["--scene", "door", "--floor", "0", "--spp", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("floor"));
}

#[test]
fn deterministic_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = render(dir.path(), "a.pfm", &["--deterministic"]);
    let b = render(dir.path(), "b.pfm", &["--deterministic"]);
    assert!(a.starts_with(b"PF\n16 12\n-1.0\n"));
    assert_eq!(a.len(), 14 + 16 * 12 * 12);
    assert_eq!(a, b);
    let c = render(dir.path(), "c.pfm", &["--deterministic", "--seed", "2"]);
    assert_ne!(a, c);
}

#[test]
fn ppm_output_follows_the_extension() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = render(dir.path(), "x.ppm", &["--threads", "1"]);
    assert!(bytes.starts_with(b"P6\n16 12\n255\n"));
}

#[test]
fn stats_and_dump_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.csv");
    let dump = dir.path().join("probes.txt");
    render(
        dir.path(),
        "x.pfm",
        &["--stats", stats.to_str().unwrap(), "--dump-probes", dump.to_str().unwrap(), "--strata", "4x8"],
    );
    let csv = fs::read_to_string(stats).unwrap();
    for line in ["# mode=rl", "# strata=4x8", "# probes=64", "# alpha=visits", "# floor=0.0001", "# seed=1", "# grid=16,16,16"] {
        assert!(csv.lines().any(|l| l == line), "missing {line}");
    }
    let rows: Vec<&str> = csv.lines().skip_while(|l| l.starts_with('#')).collect();
    assert_eq!(rows[0], "iteration,paths,nonzero_paths,avg_path_length,ms_elapsed");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0,192,"));
    let dump = fs::read_to_string(dump).unwrap();
    assert_eq!(dump.lines().count(), 64);
    assert_eq!(dump.lines().next().unwrap().split(' ').count(), 6 + 32);
}

#[test]
fn presets_come_from_the_scene() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.csv");
    let o = rlpt(&[
        "--scene",
        "furnace",
        "--preset",
        "default",
        "--spp",
        "1",
        "--width",
        "8",
        "--out",
        dir.path().join("f.pfm").to_str().unwrap(),
        "--stats",
        stats.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(stats).unwrap();
    assert!(csv.contains("# width=8\n"));
    let o = rlpt(&["--scene", "furnace", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}
