//! Named configurations used by the acceptance suite and the CLI.

#![allow(clippy::field_reassign_with_default)]

use crate::control::TraceSpec;
use crate::netsim::Jitter;
use crate::scheduler::Duration;

use super::config::{LinkConfig, Mode, SimConfig, StageConfig};

pub const NAMES: [&str; 5] = ["one-unit-world", "missing-waypoint", "degraded-sinusoid", "drop-count", "narrow-downlink"];

pub fn by_name(name: &str, mode: Mode, seed: u64) -> Option<SimConfig> {
    let mut cfg = match name {
        "one-unit-world" => one_unit_world(),
        "missing-waypoint" => missing_waypoint(mode),
        "degraded-sinusoid" => degraded_sinusoid(0.1),
        "drop-count" => drop_count(0.1),
        "narrow-downlink" => narrow_downlink(),
        _ => return None,
    };
    cfg.mode = mode;
    cfg.seed = seed;
    Some(cfg)
}

fn link(latency: f64) -> LinkConfig {
    LinkConfig {
        base_latency: Some(latency),
        ..LinkConfig::default()
    }
}

/// Every period, stage and hop takes one unit (one second): a hand sample
/// goes out at 0, reaches the robot at 1, whose feedback is back at 2.
pub fn one_unit_world() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.horizon = 4.0;
    let p = &mut cfg.periods;
    (p.control, p.encoder, p.talker, p.camera, p.frame) = (1.0, 1.0, 1.0, 1.0, 1.0);
    cfg.uplink = link(1.0);
    cfg.downlink = link(1.0);
    cfg.cloud.enabled = false;
    cfg.robot.start_buffer = 1;
    cfg.xr.stages = vec![StageConfig {
        id: "render".into(),
        duration: Duration::Constant { value: 1.0 },
        gpu_bound: true,
        period: None,
    }];
    cfg.trace.generator = Some(TraceSpec::StraightLine {
        duration: 3.0,
        period: 1.0,
        length: 0.03,
        seed: 0,
    });
    cfg
}

/// Five hand samples 1 cm apart every 100 ms; the third send is lost.
pub fn missing_waypoint(mode: Mode) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.mode = mode;
    cfg.horizon = 1.5;
    cfg.uplink = LinkConfig {
        forced_drops: vec![2],
        ..link(0.02)
    };
    cfg.downlink = link(0.02);
    cfg.cloud.enabled = false;
    cfg.robot.start_buffer = 3;
    cfg.trace.generator = Some(TraceSpec::StraightLine {
        duration: 0.4,
        period: 0.1,
        length: 0.04,
        seed: 0,
    });
    cfg
}

/// Sinusoid over 100 ms ± 25 ms one-way links with `drop_prob` loss.
pub fn degraded_sinusoid(drop_prob: f64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.horizon = 6.0;
    cfg.cloud.enabled = false;
    for l in [&mut cfg.uplink, &mut cfg.downlink] {
        *l = LinkConfig {
            jitter: Some(Jitter::Uniform { half_width: 0.025 }),
            drop_prob: Some(drop_prob),
            ..link(0.1)
        };
    }
    cfg
}

/// Fast talker over a lossy downlink: 12,000 feedback messages.
pub fn drop_count(drop_prob: f64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.horizon = 12.0;
    cfg.periods.talker = 0.001;
    cfg.cloud.enabled = false;
    cfg.downlink = LinkConfig {
        drop_prob: Some(drop_prob),
        ..link(0.01)
    };
    cfg.trace.generator = Some(TraceSpec::Stationary {
        duration: 1.0,
        period: 0.02,
    });
    cfg
}

/// Slowest cellular preset with per-talker-period bandwidth gating and
/// unscaled clouds larger than one period's budget.
pub fn narrow_downlink() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.horizon = 10.0;
    cfg.downlink = LinkConfig {
        preset: Some("cellular-4g".into()),
        gate_period: Some(cfg.periods.talker),
        ..LinkConfig::default()
    };
    cfg.cloud.scaling = false;
    cfg
}
