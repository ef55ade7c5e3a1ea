//! Live mode: each side runs in its own process on wall-clock timers and
//! exchanges datagrams. Not deterministic.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::feedback::{compose_frame, XrReconstructor};
use crate::netsim::datagram::{DatagramTransport, TransportError, MAX_DATAGRAM};
use crate::netsim::WireMessage;
use crate::pose::{secs_to_nanos, FeedbackSample, FrameRecord, Timestamp};

use super::config::Resolved;
use super::metrics::{summarize_error, teleop_error, ErrorSummary};
use super::robot::RobotSide;
use super::sim::{frame_stats, m2m_report, xr_counters, FrameStats, M2mReport, RobotCounters, XrCounters};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Xr,
    Robot,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "xr" => Ok(Side::Xr),
            "robot" => Ok(Side::Robot),
            _ => Err(format!("unknown side {s:?} (expected xr or robot)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct XrLiveReport {
    pub m2m: M2mReport,
    pub teleop_error: ErrorSummary,
    pub frames: FrameStats,
    pub xr: XrCounters,
    pub hand_sent: usize,
    pub send_errors: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobotLiveReport {
    pub robot: RobotCounters,
    pub feedback_sent: u64,
    /// Clouds left out because the message would not fit one datagram.
    pub clouds_skipped: u64,
    pub send_errors: u64,
}

/// Periodic timer on the monotonic clock, in ns since the run started.
struct Ticker {
    period: u64,
    next: u64,
}

impl Ticker {
    fn new(period_secs: f64) -> Self {
        Ticker {
            period: secs_to_nanos(period_secs),
            next: 0,
        }
    }

    fn due(&mut self, now: u64) -> Option<Timestamp> {
        (now >= self.next).then(|| {
            let t = Timestamp(self.next);
            self.next += self.period;
            t
        })
    }
}

fn elapsed(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

fn wait_until(start: Instant, deadline: u64) -> Duration {
    Duration::from_nanos(deadline.saturating_sub(elapsed(start)))
}

/// XR side: replays the trace, reconstructs the robot pose per frame.
pub fn run_xr(r: &Resolved, run_for: Duration) -> Result<XrLiveReport, TransportError> {
    let cfg = &r.config;
    let mut net = DatagramTransport::bind(&cfg.live.xr_addr, &cfg.live.robot_addr)?;
    let (start_pose, _) = r.robot_start();
    let mut xr = XrReconstructor::new(cfg.ekf.clone(), r.transform, start_pose, cfg.robot.initial_gripper);
    let mut frame = Ticker::new(cfg.periods.frame);
    let mut frames: Vec<FrameRecord> = Vec::new();
    let mut hand_sent = Vec::new();
    let mut send_errors = 0;
    let samples = r.trace.samples();
    let start = Instant::now();
    let end = run_for.as_nanos() as u64;
    let mut cursor = 0;
    loop {
        let now = elapsed(start);
        if now >= end {
            break;
        }
        while cursor < samples.len() && samples[cursor].t_start.nanos() <= now {
            let s = samples[cursor];
            cursor += 1;
            xr.record_hand(s);
            hand_sent.push(s.t_start);
            if net.send(&WireMessage::UserMotion(s)).is_err() {
                send_errors += 1;
            }
        }
        if frame.due(now).is_some() {
            if let Some(user) = xr.latest_hand().copied() {
                let view = super::sim::xr_view(cfg.mode, &mut xr);
                frames.push(compose_frame(&user, &view, xr.last_feedback_t_start(), Timestamp(elapsed(start))));
            }
        }
        let next_hand = samples.get(cursor).map_or(u64::MAX, |s| s.t_start.nanos());
        let deadline = frame.next.min(next_hand).min(end);
        if let Ok(Some(WireMessage::RobotFeedback(fb))) = net.recv(wait_until(start, deadline)) {
            let _ = xr.on_feedback(&fb);
        }
    }
    let errors = teleop_error(&frames, &r.transform);
    Ok(XrLiveReport {
        m2m: m2m_report(&frames, &hand_sent),
        teleop_error: summarize_error(&errors),
        frames: frame_stats(&frames, run_for.as_secs_f64()),
        xr: xr_counters(&xr),
        hand_sent: hand_sent.len(),
        send_errors,
    })
}

/// Robot side: listener, controller, encoder and talker on their periods.
pub fn run_robot(r: &Resolved, run_for: Duration) -> Result<RobotLiveReport, TransportError> {
    let cfg = &r.config;
    let mut net = DatagramTransport::bind(&cfg.live.robot_addr, &cfg.live.xr_addr)?;
    let mut robot = RobotSide::new(r);
    let p = &cfg.periods;
    let mut control = Ticker::new(p.control);
    let mut encoder = Ticker::new(p.encoder);
    let mut talker = Ticker::new(p.talker);
    let (mut sent, mut skipped, mut send_errors) = (0, 0, 0);
    let start = Instant::now();
    let end = run_for.as_nanos() as u64;
    loop {
        let now = elapsed(start);
        if now >= end {
            break;
        }
        while let Some(t) = control.due(now) {
            robot.control(t);
        }
        if let Some(t) = encoder.due(now) {
            robot.encoder(t);
        }
        if talker.due(now).is_some() {
            if let Some((fb, cloud)) = robot.talker(Timestamp(now)) {
                let mut msg = FeedbackSample { cloud, ..fb };
                if WireMessage::RobotFeedback(msg.clone()).encoded_len() > MAX_DATAGRAM {
                    msg.cloud = None;
                    skipped += 1;
                }
                match net.send(&WireMessage::RobotFeedback(msg)) {
                    Ok(_) => sent += 1,
                    Err(_) => send_errors += 1,
                }
            }
        }
        let deadline = control.next.min(encoder.next).min(talker.next).min(end);
        if let Ok(Some(WireMessage::UserMotion(h))) = net.recv(wait_until(start, deadline)) {
            robot.receive(&h);
        }
    }
    Ok(RobotLiveReport {
        robot: robot.counters(),
        feedback_sent: sent,
        clouds_skipped: skipped,
        send_errors,
    })
}
