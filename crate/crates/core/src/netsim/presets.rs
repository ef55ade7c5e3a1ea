//! Named link profiles, ordered from most to least capable.

use super::channel::{ChannelConfig, Jitter};

pub const PRESET_NAMES: [&str; 4] = ["wlan-5ghz", "wlan-2.4ghz", "cellular-5g", "cellular-4g"];

/// Returns the preset with `seed` and `gate_period` applied, or `None` for an
/// unknown name.
pub fn preset(name: &str, seed: u64, gate_period: Option<f64>) -> Option<ChannelConfig> {
    let (base_latency, jitter, drop_prob, bandwidth) = match name {
        "wlan-5ghz" => (0.015, 0.002, 0.001, 40e6),
        "wlan-2.4ghz" => (0.025, 0.005, 0.005, 4e6),
        "cellular-5g" => (0.035, 0.008, 0.01, 2e6),
        "cellular-4g" => (0.060, 0.015, 0.02, 1e6),
        _ => return None,
    };
    Some(ChannelConfig {
        base_latency,
        jitter: Jitter::Uniform { half_width: jitter },
        drop_prob,
        bandwidth,
        gate_period,
        seed,
        forced_drops: Vec::new(),
    })
}
