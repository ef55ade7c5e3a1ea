use teleop_wasm::{compare_modes, run_sinusoid, scale_demo};

#[test]
fn scaling_respects_the_budget_and_keeps_edges() {
    let s = scale_demo(80, 60, 1.6e6, 0.04, 1).unwrap();
    assert_eq!(s.n_max, 4000);
    assert_eq!(s.raw_points, 80 * 60);
    assert!(s.kept <= s.n_max);
    assert_eq!(s.pixels.iter().filter(|&&p| p == 3).count(), s.n_e);
    assert_eq!(s.pixels.iter().filter(|&&p| p >= 2).count(), s.kept);
}

#[test]
fn ample_bandwidth_keeps_everything() {
    let s = scale_demo(40, 30, 1e9, 0.04, 0).unwrap();
    assert_eq!((s.r, s.kept), (1.0, 40 * 30));
    assert!(!s.pixels.contains(&1));
}

#[test]
fn bad_scaling_input_is_an_error() {
    assert!(scale_demo(40, 30, 0.0, 0.04, 0).is_err());
}

#[test]
fn sinusoid_series_line_up() {
    let r = run_sinusoid("telexr", 100.0, 25.0, 10.0, 3).unwrap();
    assert_eq!(r.t.len(), r.robot_x.len());
    assert_eq!(r.user_y.len(), r.robot_y.len());
    assert!(r.mean_error_mm.unwrap() > 0.0);
    assert!(run_sinusoid("nope", 0.0, 0.0, 0.0, 0).is_err());
}

#[test]
fn compare_pairs_each_seed() {
    let rows = compare_modes(100.0, 25.0, 10.0, 3).unwrap();
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(rows.iter().all(|r| r.telexr_mm < r.baseline_mm));
}
