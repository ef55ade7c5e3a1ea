use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{secs_to_nanos, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("payload must be non-empty")]
    EmptyPayload,
    #[error("invalid channel config: {0}")]
    InvalidConfig(String),
}

/// Extra one-way delay added on top of the base latency. Samples are
/// rectified at zero so a message never beats `send_time + base_latency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Jitter {
    #[default]
    None,
    /// Uniform in `[-half_width, +half_width]` seconds.
    Uniform { half_width: f64 },
    /// Zero-mean normal with standard deviation `sigma` seconds.
    Normal { sigma: f64 },
    /// Fixed per-send offsets (seconds), cycled. For constructed scenarios.
    Scripted { offsets: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Seconds.
    pub base_latency: f64,
    #[serde(default)]
    pub jitter: Jitter,
    #[serde(default)]
    pub drop_prob: f64,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Budget window for bandwidth gating, seconds. `None` disables gating.
    #[serde(default)]
    pub gate_period: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Zero-based send indices that are always dropped.
    #[serde(default)]
    pub forced_drops: Vec<u64>,
}

impl ChannelConfig {
    /// Zero-latency, lossless, effectively unbounded bandwidth.
    pub fn ideal() -> Self {
        ChannelConfig {
            base_latency: 0.0,
            jitter: Jitter::None,
            drop_prob: 0.0,
            bandwidth: 1e15,
            gate_period: None,
            seed: 0,
            forced_drops: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidConfig(m.to_string()));
        if !(self.base_latency >= 0.0) || !self.base_latency.is_finite() {
            return bad("base_latency must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad("drop_prob must be in [0, 1]");
        }
        if !(self.bandwidth > 0.0) {
            return bad("bandwidth must be > 0");
        }
        if let Some(p) = self.gate_period {
            if !(p > 0.0) {
                return bad("gate_period must be > 0");
            }
        }
        match &self.jitter {
            Jitter::Uniform { half_width } if !(*half_width >= 0.0) => bad("jitter half_width must be >= 0"),
            Jitter::Normal { sigma } if !(*sigma >= 0.0) => bad("jitter sigma must be >= 0"),
            Jitter::Scripted { offsets } if offsets.is_empty() => bad("scripted jitter needs offsets"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCause {
    Random,
    Bandwidth,
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Queued { seq: u64, delivery_time: Timestamp },
    Dropped { seq: u64, cause: DropCause },
}

impl SendOutcome {
    pub fn delivery_time(&self) -> Option<Timestamp> {
        match self {
            SendOutcome::Queued { delivery_time, .. } => Some(*delivery_time),
            SendOutcome::Dropped { .. } => None,
        }
    }

    pub fn seq(&self) -> u64 {
        match self {
            SendOutcome::Queued { seq, .. } | SendOutcome::Dropped { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub payload: Vec<u8>,
    pub send_time: Timestamp,
    pub delivery_time: Timestamp,
    /// Send order; breaks ties between equal delivery times.
    pub seq: u64,
}

impl Ord for InFlight {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.delivery_time, self.seq).cmp(&(other.delivery_time, other.seq))
    }
}

impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_random: u64,
    pub dropped_bandwidth: u64,
    pub dropped_forced: u64,
    pub bytes_sent: u64,
}

/// One direction of a simulated link.
#[derive(Debug)]
pub struct Channel {
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
    queue: BinaryHeap<Reverse<InFlight>>,
    next_seq: u64,
    window: Option<u64>,
    window_bytes: f64,
    stats: ChannelStats,
}

impl Channel {
    pub fn new(cfg: ChannelConfig) -> Result<Self, ChannelError> {
        cfg.validate()?;
        let normal = match cfg.jitter {
            Jitter::Normal { sigma } => {
                Some(Normal::new(0.0, sigma).map_err(|e| ChannelError::InvalidConfig(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Channel {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            normal,
            queue: BinaryHeap::new(),
            next_seq: 0,
            window: None,
            window_bytes: 0.0,
            stats: ChannelStats::default(),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    fn jitter_sample(&mut self, seq: u64) -> f64 {
        match &self.cfg.jitter {
            Jitter::None => 0.0,
            Jitter::Uniform { half_width } => {
                let w = *half_width;
                if w == 0.0 {
                    0.0
                } else {
                    self.rng.random_range(-w..=w)
                }
            }
            Jitter::Normal { .. } => {
                let n = self.normal.expect("normal jitter initialised");
                n.sample(&mut self.rng)
            }
            Jitter::Scripted { offsets } => offsets[(seq % offsets.len() as u64) as usize],
        }
    }

    /// Submits a payload at `now`.
    pub fn send(&mut self, payload: Vec<u8>, now: Timestamp) -> Result<SendOutcome, ChannelError> {
        if payload.is_empty() {
            return Err(ChannelError::EmptyPayload);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.stats.sent += 1;
        // both draws happen on every send so the stream position only
        // depends on the number of sends
        let u: f64 = self.rng.random();
        let jitter = self.jitter_sample(seq).max(0.0);

        if self.cfg.forced_drops.contains(&seq) {
            self.stats.dropped_forced += 1;
            return Ok(SendOutcome::Dropped {
                seq,
                cause: DropCause::Forced,
            });
        }
        let size = payload.len() as f64;
        if let Some(period) = self.cfg.gate_period {
            let window = now.nanos() / secs_to_nanos(period).max(1);
            if self.window != Some(window) {
                self.window = Some(window);
                self.window_bytes = 0.0;
            }
            if self.window_bytes + size > self.cfg.bandwidth * period {
                self.stats.dropped_bandwidth += 1;
                return Ok(SendOutcome::Dropped {
                    seq,
                    cause: DropCause::Bandwidth,
                });
            }
            self.window_bytes += size;
        }
        self.stats.bytes_sent += payload.len() as u64;
        if u < self.cfg.drop_prob {
            self.stats.dropped_random += 1;
            return Ok(SendOutcome::Dropped {
                seq,
                cause: DropCause::Random,
            });
        }
        let base = secs_to_nanos(self.cfg.base_latency);
        let extra = secs_to_nanos(jitter + size / self.cfg.bandwidth);
        let delivery_time = now + base + extra;
        self.queue.push(Reverse(InFlight {
            payload,
            send_time: now,
            delivery_time,
            seq,
        }));
        Ok(SendOutcome::Queued { seq, delivery_time })
    }

    /// Removes and returns every message due by `now`, ordered by delivery
    /// time then send order.
    pub fn poll(&mut self, now: Timestamp) -> Vec<InFlight> {
        let mut out = Vec::new();
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.delivery_time > now {
                break;
            }
            let Reverse(msg) = self.queue.pop().expect("peeked");
            out.push(msg);
        }
        self.stats.delivered += out.len() as u64;
        out
    }

    /// Earliest pending delivery time.
    pub fn next_delivery(&self) -> Option<Timestamp> {
        self.queue.peek().map(|Reverse(m)| m.delivery_time)
    }
}
