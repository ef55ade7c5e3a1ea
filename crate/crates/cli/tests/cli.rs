use std::path::Path;
use std::process::{Command, Output};

fn teleop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleop"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn run_scenario_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(&["run", "--scenario", "one-unit-world", "--seed", "4", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("m2m reconstructed"));
    for f in ["report.json", "report.txt", "frames.csv", "timeline.csv"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 4);
}

#[test]
fn bad_config_exits_nonzero_with_field_names() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "horizon = 0\n[periods]\nframe = -1\n").unwrap();
    let out = teleop(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("horizon") && err.contains("periods.frame"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[periods]\nframes = 0.02\n").unwrap();
    let out = teleop(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("frames"));
}

#[test]
fn generated_trace_drives_a_config_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(
        &["gen-trace", "straight-line", "--duration", "0.4", "--length", "0.02", "--out", "t.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 21);
    std::fs::write(
        dir.path().join("sim.toml"),
        "horizon = 1.0\nmode = \"baseline\"\n[trace]\npath = \"t.csv\"\n[cloud]\nenabled = false\n",
    )
    .unwrap();
    let out = teleop(&["run", "--config", "sim.toml", "--mode", "telexr"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("mode telexr"));
}

#[test]
fn gen_scene_writes_cloud_and_depth() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(&["gen-scene", "step", "--width", "32", "--height", "24", "--out", "s.bin"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("768 points"));
    let cloud = teleop_core::pointcloud::OrganizedCloud::load(&dir.path().join("s.bin")).unwrap();
    assert_eq!((cloud.width, cloud.height, cloud.point_count()), (32, 24, 768));
}

#[test]
fn compare_emits_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(&["compare", "--scenario", "missing-waypoint", "--seeds", "3..=5"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let rows: Vec<_> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("3,") && rows[2].starts_with("5,"));
    assert!(text(&out.stderr).contains("/3 seeds"));
}

#[test]
fn empty_seed_range_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(&["compare", "--seeds", "5..5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("empty"));
}

#[test]
fn side_requires_datagram_transport() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(&["run", "--scenario", "one-unit-world", "--side", "xr"], dir.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("datagram"));
}
