//! The simulated end-to-end loop.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::feedback::{compose_frame, robot_talker_send, RobotView, XrReconstructor};
use crate::netsim::{decode, encode, Channel, SendOutcome, WireMessage};
use crate::pose::{secs_to_nanos, FrameRecord, HandSample, Timestamp};
use crate::scheduler::{run_contention_aware, run_unsynchronized, Timeline};

use super::config::{ConfigError, Mode, Resolved, SimConfig, Transport};
use super::events::{Action, EventQueue};
use super::robot::RobotSide;
use super::metrics::{
    completion_time, drop_pct, m2m_latency, pose_updates, summarize, summarize_error, teleop_error,
    ClassCount, ClassDrops, Completion, ErrorSummary, M2mSemantics, RobotState, Summary,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("datagram transport runs through the live mode, not the simulator")]
    WrongTransport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct M2mReport {
    /// Per emitted hand sample, seconds; `null` when censored.
    pub reconstructed_samples: Vec<Option<f64>>,
    pub actual_samples: Vec<Option<f64>>,
    pub reconstructed: Summary,
    pub actual: Summary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RobotCounters {
    pub received: u64,
    pub stale_discards: u64,
    pub duplicate_discards: u64,
    pub unreachable: u64,
    pub consumed: u64,
    /// Hold runs while a target was pending (after the start buffer released).
    pub hold_intervals_pending: usize,
    /// Stops between the first and last motion command.
    pub interior_stops: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct XrCounters {
    pub feedback_accepted: u64,
    pub feedback_stale: u64,
    pub feedback_singular: u64,
    pub pauses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameStats {
    pub count: usize,
    pub reconstructed: usize,
    /// Frames per second of simulated time.
    pub rate: f64,
    /// Frames whose drawn robot pose changed, per second.
    pub pose_update_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineStats {
    pub bound: f64,
    pub deadline_misses: usize,
    pub inversions: usize,
    pub blocked_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudStats {
    pub raw_points: usize,
    pub sent_points: usize,
    pub n_max: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub horizon: f64,
    pub m2m: M2mReport,
    pub teleop_error: ErrorSummary,
    pub completion: Completion,
    /// Downlink classes `pose`, `gripper`, `cloud`, plus the uplink `user_motion`.
    pub drops: BTreeMap<String, ClassDrops>,
    pub robot: RobotCounters,
    pub xr: XrCounters,
    pub frames: FrameStats,
    pub pipeline: PipelineStats,
    pub cloud: Option<CloudStats>,
    pub config: SimConfig,
}

/// One control tick: whether the command was a hold and whether a target
/// was pending at the time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandLog {
    pub time: Timestamp,
    pub hold: bool,
    pub pending: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SimLogs {
    /// `t_start` of every hand sample the XR side emitted.
    pub hand_sent: Vec<Timestamp>,
    pub robot_states: Vec<RobotState>,
    pub commands: Vec<CommandLog>,
    /// Consumed waypoint stamps in consumption order.
    pub consumed: Vec<Timestamp>,
    /// Every processed event in execution order.
    pub events: Vec<(Timestamp, Action)>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub frames: Vec<FrameRecord>,
    /// Teleoperation error per frame, aligned with `frames`.
    pub errors: Vec<(f64, f64)>,
    pub timeline: Timeline,
    pub logs: SimLogs,
}

pub fn run(config: &SimConfig) -> Result<SimOutput, SimError> {
    if config.transport != Transport::Simulated {
        return Err(SimError::WrongTransport);
    }
    let resolved = config.resolve()?;
    Ok(simulate(&resolved))
}

struct Snapshot {
    user: HandSample,
    view: RobotView,
    feedback_t_start: Option<Timestamp>,
}

/// Runs a validated configuration to its horizon.
pub fn simulate(r: &Resolved) -> SimOutput {
    let cfg = &r.config;
    let mode = cfg.mode;
    let horizon = secs_to_nanos(cfg.horizon);
    let p = &cfg.periods;
    let (t_c, t_enc, t_rt) = (secs_to_nanos(p.control), secs_to_nanos(p.encoder), secs_to_nanos(p.talker));

    let mut uplink = Channel::new(r.uplink.clone()).expect("validated");
    let mut downlink = Channel::new(r.downlink.clone()).expect("validated");
    let mut robot = RobotSide::new(r);
    let mut xr = XrReconstructor::new(cfg.ekf.clone(), r.transform, robot.act.ee_pose, cfg.robot.initial_gripper);
    let mut snapshots: Vec<Option<Snapshot>> = Vec::new();
    let mut frames = Vec::new();

    let mut counts: BTreeMap<&'static str, ClassCount> =
        ["pose", "gripper", "cloud", "user_motion"].into_iter().map(|k| (k, ClassCount::default())).collect();
    let mut hand_sent = Vec::new();
    let mut events = Vec::new();

    let timeline = match mode {
        Mode::Telexr => run_contention_aware(&r.pipeline, cfg.horizon),
        Mode::Baseline => run_unsynchronized(&r.pipeline, cfg.horizon),
    };

    let mut q = EventQueue::new();
    for s in r.trace.samples() {
        if s.t_start.nanos() <= horizon {
            q.push(s.t_start, Action::Hand);
        }
    }
    for (i, e) in timeline.entries.iter().enumerate() {
        if e.stage == 0 && e.start <= horizon {
            q.push(Timestamp(e.start), Action::FrameSnapshot { job: e.job });
        }
        if e.stage + 1 == timeline.stage_ids.len() && e.generation.is_some() && e.end <= horizon {
            q.push(Timestamp(e.end), Action::FrameDisplay { entry: i });
        }
    }
    q.push(Timestamp::ZERO, Action::Control);
    q.push(Timestamp::ZERO, Action::Encoder);
    q.push(Timestamp::ZERO, Action::Talker);

    let mut hand_cursor = 0usize;
    // messages still in flight at the horizon count neither as sent nor lost
    let settled = |o: &SendOutcome| o.delivery_time().is_none_or(|t| t.nanos() <= horizon);

    while let Some(ev) = q.pop() {
        let now = ev.time;
        if now.nanos() > horizon {
            break;
        }
        events.push((now, ev.action));
        match ev.action {
            Action::Hand => {
                let s = r.trace.samples()[hand_cursor];
                hand_cursor += 1;
                xr.record_hand(s);
                hand_sent.push(s.t_start);
                let out = uplink.send(encode(&WireMessage::UserMotion(s)), now).expect("non-empty payload");
                if settled(&out) {
                    bump(&mut counts, "user_motion", true, false);
                }
                if let Some(t) = out.delivery_time() {
                    q.push(t, Action::UplinkDelivery);
                }
            }
            Action::UplinkDelivery => {
                for msg in uplink.poll(now) {
                    if let Ok(WireMessage::UserMotion(h)) = decode(&msg.payload) {
                        bump(&mut counts, "user_motion", false, true);
                        robot.receive(&h);
                    }
                }
            }
            Action::Control => {
                robot.control(now);
                q.push(Timestamp(now.nanos() + t_c), Action::Control);
            }
            Action::Encoder => {
                robot.encoder(now);
                q.push(Timestamp(now.nanos() + t_enc), Action::Encoder);
            }
            Action::Talker => {
                if let Some((fb, cloud)) = robot.talker(now) {
                    let has_cloud = cloud.is_some();
                    let out = robot_talker_send(&fb, cloud, &mut downlink, now).expect("non-empty payload");
                    if settled(&out) {
                        bump(&mut counts, "pose", true, false);
                        bump(&mut counts, "gripper", true, false);
                        if has_cloud {
                            bump(&mut counts, "cloud", true, false);
                        }
                    }
                    if let Some(t) = out.delivery_time() {
                        q.push(t, Action::DownlinkDelivery);
                    }
                }
                q.push(Timestamp(now.nanos() + t_rt), Action::Talker);
            }
            Action::DownlinkDelivery => {
                for msg in downlink.poll(now) {
                    let Ok(WireMessage::RobotFeedback(fb)) = decode(&msg.payload) else {
                        continue;
                    };
                    bump(&mut counts, "pose", false, true);
                    bump(&mut counts, "gripper", false, true);
                    if fb.cloud.is_some() {
                        bump(&mut counts, "cloud", false, true);
                    }
                    // stale or singular updates are counted by the reconstructor
                    let _ = xr.on_feedback(&fb);
                }
            }
            Action::FrameSnapshot { job } => {
                if snapshots.len() <= job {
                    snapshots.resize_with(job + 1, || None);
                }
                if let Some(user) = xr.latest_hand().copied() {
                    snapshots[job] = Some(Snapshot {
                        user,
                        view: xr_view(mode, &mut xr),
                        feedback_t_start: xr.last_feedback_t_start(),
                    });
                }
            }
            Action::FrameDisplay { entry } => {
                let g = timeline.entries[entry].generation.expect("only scheduled with a generation");
                if let Some(Some(s)) = snapshots.get(g) {
                    frames.push(compose_frame(&s.user, &s.view, s.feedback_t_start, now));
                }
            }
        }
    }

    let last = r.trace.last();
    let completion = match hand_sent.last() {
        Some(&t) if t == last.t_start => completion_time(
            &robot.states[..robot.states.partition_point(|s| s.time.nanos() <= horizon)],
            t,
            &r.transform.compose(&last.pose),
            last.fist,
            r.planner.eps_reach,
        ),
        // the final sample was never emitted within the horizon
        _ => Completion {
            time: None,
            censored: true,
        },
    };
    let errors = teleop_error(&frames, &r.transform);
    let report = MetricsReport {
        mode,
        seed: cfg.seed,
        horizon: cfg.horizon,
        m2m: m2m_report(&frames, &hand_sent),
        teleop_error: summarize_error(&errors),
        completion,
        drops: drop_pct(&counts),
        robot: robot.counters(),
        xr: xr_counters(&xr),
        frames: frame_stats(&frames, cfg.horizon),
        pipeline: PipelineStats {
            bound: r.bound,
            deadline_misses: timeline.deadline_misses,
            inversions: timeline.inversions,
            blocked_ns: timeline.total_blocked(),
        },
        cloud: r.cloud.as_ref().map(|c| CloudStats {
            raw_points: c.raw_points,
            sent_points: c.block.points.len(),
            n_max: c.n_max,
            r: c.r,
        }),
        config: cfg.clone(),
    };
    let logs = SimLogs {
        hand_sent,
        robot_states: std::mem::take(&mut robot.states),
        commands: std::mem::take(&mut robot.commands),
        consumed: std::mem::take(&mut robot.consumed),
        events,
    };
    SimOutput {
        report,
        frames,
        errors,
        timeline,
        logs,
    }
}

fn bump(counts: &mut BTreeMap<&'static str, ClassCount>, class: &'static str, sent: bool, received: bool) {
    let c = counts.get_mut(class).expect("known class");
    c.sent += u64::from(sent);
    c.received += u64::from(received);
}

/// What the XR side draws for the robot in the current frame.
pub fn xr_view(mode: Mode, xr: &mut XrReconstructor) -> RobotView {
    match mode {
        Mode::Telexr => xr.reconstruct(),
        Mode::Baseline => xr.verbatim(),
    }
}

pub fn m2m_report(frames: &[FrameRecord], hand_sent: &[Timestamp]) -> M2mReport {
    let reconstructed_samples = m2m_latency(frames, hand_sent, M2mSemantics::Reconstructed);
    let actual_samples = m2m_latency(frames, hand_sent, M2mSemantics::Actual);
    M2mReport {
        reconstructed: summarize(&reconstructed_samples),
        actual: summarize(&actual_samples),
        reconstructed_samples,
        actual_samples,
    }
}

pub fn xr_counters(xr: &XrReconstructor) -> XrCounters {
    let s = xr.stats();
    XrCounters {
        feedback_accepted: s.accepted,
        feedback_stale: s.stale,
        feedback_singular: s.singular,
        pauses: s.pauses,
    }
}

pub fn frame_stats(frames: &[FrameRecord], secs: f64) -> FrameStats {
    FrameStats {
        count: frames.len(),
        reconstructed: frames.iter().filter(|f| f.reconstructed).count(),
        rate: frames.len() as f64 / secs,
        pose_update_rate: pose_updates(frames) as f64 / secs,
    }
}
