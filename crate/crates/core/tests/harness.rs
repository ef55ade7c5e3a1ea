#![allow(clippy::field_reassign_with_default)]

use teleop_core::control::TraceSpec;
use teleop_core::harness::config::LinkConfig;
use teleop_core::harness::output::{frames_csv, report_json, timeline_csv, write_all};
use teleop_core::harness::{run, scenarios, Action, Mode, SimConfig, SimError};
use teleop_core::netsim::Jitter;
use teleop_core::pose::secs_to_nanos;

fn lossy(p: f64) -> LinkConfig {
    LinkConfig {
        drop_prob: Some(p),
        ..LinkConfig::default()
    }
}

#[test]
fn stationary_error_settles_within_reach_bound() {
    let mut cfg = SimConfig::default();
    cfg.trace.generator = Some(TraceSpec::Stationary {
        duration: 1.0,
        period: 0.02,
    });
    cfg.horizon = 2.0;
    let out = run(&cfg).unwrap();
    let bound = cfg.planner.eps_reach + cfg.planner.v_max * cfg.periods.control;
    let tail = &out.errors[out.errors.len() - 10..];
    assert!(tail.iter().all(|e| e.0 < bound), "{tail:?}");
}

#[test]
fn frames_advance_when_feedback_never_arrives() {
    let mut cfg = SimConfig::default();
    cfg.downlink = lossy(1.0);
    let out = run(&cfg).unwrap();
    assert!(out.frames.len() > 100);
    assert!(out.frames[1..].iter().all(|f| f.reconstructed));
    // the drawn robot keeps moving with the hand
    assert!(out.report.frames.pose_update_rate > 10.0);
}

#[test]
fn baseline_display_freezes_without_feedback() {
    let mut cfg = SimConfig::default();
    cfg.mode = Mode::Baseline;
    cfg.downlink = lossy(1.0);
    let out = run(&cfg).unwrap();
    let first = out.frames[0].robot_pose_shown;
    assert!(out.frames.iter().all(|f| f.robot_pose_shown == first && !f.reconstructed));
    assert_eq!(out.report.frames.pose_update_rate, 0.0);
}

#[test]
fn identical_runs_are_byte_identical() {
    for mode in [Mode::Telexr, Mode::Baseline] {
        let mut cfg = scenarios::degraded_sinusoid(0.1);
        cfg.mode = mode;
        cfg.seed = 11;
        let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
        assert_eq!(report_json(&a.report), report_json(&b.report));
        assert_eq!(frames_csv(&a), frames_csv(&b));
        assert_eq!(timeline_csv(&a), timeline_csv(&b));
    }
}

#[test]
fn seed_changes_the_channel_draws() {
    let mut cfg = scenarios::degraded_sinusoid(0.1);
    cfg.seed = 1;
    let a = run(&cfg).unwrap();
    cfg.seed = 2;
    let b = run(&cfg).unwrap();
    assert_ne!(report_json(&a.report), report_json(&b.report));
}

#[test]
fn events_execute_in_total_order() {
    let out = run(&scenarios::one_unit_world()).unwrap();
    let rank = |a: &Action| match a {
        Action::Hand => 0,
        Action::UplinkDelivery => 1,
        Action::DownlinkDelivery => 2,
        Action::Control => 3,
        Action::Encoder => 4,
        Action::Talker => 5,
        Action::FrameSnapshot { .. } => 6,
        Action::FrameDisplay { .. } => 7,
    };
    for w in out.logs.events.windows(2) {
        assert!((w[0].0, rank(&w[0].1)) <= (w[1].0, rank(&w[1].1)), "{w:?}");
    }
}

#[test]
fn ideal_link_m2m_is_pipeline_time() {
    let cfg = SimConfig::default();
    let out = run(&cfg).unwrap();
    let stages: f64 = 0.010;
    let bound = cfg.periods.frame + stages;
    let m = &out.report.m2m.reconstructed;
    assert_eq!(m.censored, 0);
    assert!(m.p99.unwrap() <= bound + 1e-9, "{m:?}");
}

#[test]
fn one_way_delay_adds_round_trip_to_baseline_m2m() {
    let mean = |latency: f64| {
        let mut cfg = SimConfig::default();
        cfg.mode = Mode::Baseline;
        cfg.cloud.enabled = false;
        cfg.uplink.base_latency = Some(latency);
        cfg.downlink.base_latency = Some(latency);
        run(&cfg).unwrap().report.m2m.actual.mean.unwrap()
    };
    let delta = mean(0.1) - mean(0.0);
    // quantized by the talker and frame periods
    assert!((delta - 0.2).abs() <= 0.04, "delta {delta}");
}

#[test]
fn completion_for_a_single_sample_at_the_start_pose() {
    let mut cfg = SimConfig::default();
    cfg.trace.generator = Some(TraceSpec::Stationary {
        duration: 0.0,
        period: 0.02,
    });
    cfg.horizon = 0.5;
    for mode in [Mode::Telexr, Mode::Baseline] {
        cfg.mode = mode;
        let c = run(&cfg).unwrap().report.completion;
        assert_eq!(c.time, Some(cfg.periods.control), "{mode}");
    }
}

#[test]
fn short_horizon_censors_completion() {
    let mut cfg = SimConfig::default();
    cfg.horizon = 1.0;
    let c = run(&cfg).unwrap().report.completion;
    assert!(c.censored && c.time.is_none());
}

/// Lost waypoints shorten the planned path, so a single lossy run can finish
/// a control tick or two early; the paired mean must not.
#[test]
fn lossy_uplink_does_not_complete_sooner_on_average() {
    let (mut fast, mut slow) = (0.0, 0.0);
    for seed in 0..20 {
        let mut cfg = SimConfig::default();
        cfg.seed = seed;
        cfg.horizon = 8.0;
        cfg.cloud.enabled = false;
        cfg.uplink.base_latency = Some(0.02);
        cfg.downlink.base_latency = Some(0.02);
        fast += run(&cfg).unwrap().report.completion.time.expect("lossless run completes");
        cfg.uplink.drop_prob = Some(0.2);
        slow += run(&cfg).unwrap().report.completion.time.unwrap_or(cfg.horizon);
    }
    assert!(slow >= fast, "{slow} < {fast}");
}

#[test]
fn lossless_link_drops_nothing() {
    let out = run(&SimConfig::default()).unwrap();
    for (class, d) in &out.report.drops {
        assert_eq!(d.pct, Some(0.0), "{class}");
    }
}

#[test]
fn telexr_frame_times_ignore_the_network() {
    let mut cfg = scenarios::degraded_sinusoid(0.0);
    let a = run(&cfg).unwrap();
    cfg.uplink.drop_prob = Some(0.5);
    cfg.downlink.drop_prob = Some(0.5);
    let b = run(&cfg).unwrap();
    let times = |o: &teleop_core::harness::SimOutput| o.frames.iter().map(|f| f.display_time).collect::<Vec<_>>();
    assert_eq!(times(&a), times(&b));
}

#[test]
fn sample_counts_follow_horizon_and_periods() {
    let cfg = SimConfig::default();
    let out = run(&cfg).unwrap();
    let h = secs_to_nanos(cfg.horizon);
    let frames_max = (h / secs_to_nanos(cfg.periods.frame)) as usize + 1;
    assert!(out.frames.len() <= frames_max);
    assert!(out.frames.len() + 2 >= frames_max);
    let talks = (h / secs_to_nanos(cfg.periods.talker)) as u64 + 1;
    assert!(out.report.drops["pose"].sent <= talks);
    let control_ticks = (h / secs_to_nanos(cfg.periods.control)) as usize + 1;
    assert_eq!(out.logs.commands.len(), control_ticks);
    assert!(out.frames.iter().all(|f| f.display_time.nanos() <= h));
    for d in out.report.drops.values() {
        assert!(d.pct.is_none_or(|p| (0.0..=100.0).contains(&p)));
    }
}

#[test]
fn rejects_bad_config_with_field_names() {
    let mut cfg = SimConfig::default();
    cfg.periods.talker = 0.0;
    cfg.downlink.jitter = Some(Jitter::Uniform { half_width: -1.0 });
    let Err(SimError::Config(e)) = run(&cfg) else {
        panic!("accepted a bad config");
    };
    let fields: Vec<_> = e.diagnostics.iter().map(|d| d.field.clone()).collect();
    assert!(fields.contains(&"periods.talker".to_string()), "{fields:?}");
    assert!(fields.contains(&"downlink".to_string()), "{fields:?}");
}

#[test]
fn datagram_transport_is_not_simulated() {
    let mut cfg = SimConfig::default();
    cfg.transport = teleop_core::harness::Transport::Datagram;
    assert!(matches!(run(&cfg), Err(SimError::WrongTransport)));
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenarios::one_unit_world()).unwrap();
    write_all(&out, dir.path()).unwrap();
    for f in ["report.json", "report.txt", "frames.csv", "timeline.csv"] {
        assert!(dir.path().join(f).metadata().unwrap().len() > 0, "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["mode"], "telexr");
    assert_eq!(json["config"]["horizon"], 4.0);
}

#[test]
fn config_file_loads_relative_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = TraceSpec::StraightLine {
        duration: 0.5,
        period: 0.02,
        length: 0.02,
        seed: 2,
    }
    .generate()
    .unwrap();
    trace.write_csv(std::fs::File::create(dir.path().join("t.csv")).unwrap()).unwrap();
    std::fs::write(
        dir.path().join("sim.toml"),
        "horizon = 1.0\n[trace]\npath = \"t.csv\"\n[cloud]\nenabled = false\n",
    )
    .unwrap();
    let cfg = SimConfig::load(&dir.path().join("sim.toml")).unwrap();
    let out = run(&cfg).unwrap();
    assert_eq!(out.logs.hand_sent.len(), trace.len());
}
