//! Feedback pipeline: robot localization and talker, XR-side reconstruction
//! of the robot pose, and frame composition.

pub mod ekf;

use std::collections::VecDeque;

pub use ekf::{
    ekf_predict, ekf_update, pause_check, EkfConfig, EkfState, HandMotion, ReconstructionOutput,
};

use crate::kinematics::{forward_kinematics, ArmModel, JointConfig, KinematicsError};
use crate::netsim::channel::{Channel, ChannelError, SendOutcome};
use crate::netsim::wire::{encode, PointBlock, WireMessage};
use crate::pose::{FeedbackSample, FrameRecord, HandSample, Pose, Timestamp};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeedbackError {
    #[error("stale feedback: echo {echo:?} not newer than {last:?}")]
    Stale {
        echo: Option<Timestamp>,
        last: Option<Timestamp>,
    },
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("estimation window must be finite and >= 0, got {0}")]
    InvalidWindow(f64),
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
}

/// End-effector pose from encoder joints; `echo` is the newest t_start the
/// robot holds (queue tail, or last consumed).
pub fn localize(
    model: &ArmModel,
    q: &JointConfig,
    gripper_encoder: f64,
    echo: Option<Timestamp>,
    captured: Timestamp,
) -> Result<FeedbackSample, KinematicsError> {
    Ok(FeedbackSample {
        captured,
        t_start_echo: echo,
        ee_pose: forward_kinematics(model, q)?,
        gripper: gripper_encoder.clamp(0.0, 1.0),
        cloud: None,
    })
}

/// Encodes one ROBOT_FEEDBACK message, with the already-budgeted cloud when
/// this is a camera tick, and submits it.
pub fn robot_talker_send(
    sample: &FeedbackSample,
    cloud: Option<PointBlock>,
    channel: &mut Channel,
    now: Timestamp,
) -> Result<SendOutcome, ChannelError> {
    let mut msg = sample.clone();
    msg.cloud = cloud;
    channel.send(encode(&WireMessage::RobotFeedback(msg)), now)
}

pub fn estimation_window(latest_feedback_t_start: Timestamp, latest_hand_t_start: Timestamp) -> f64 {
    latest_hand_t_start.saturating_secs_since(latest_feedback_t_start)
}

/// Recent local hand samples, used to measure user motion over the
/// estimation window.
#[derive(Debug, Clone, Default)]
pub struct HandHistory {
    samples: VecDeque<HandSample>,
}

impl HandHistory {
    pub fn push(&mut self, s: HandSample) {
        if self.samples.back().is_some_and(|b| b.t_start >= s.t_start) {
            return;
        }
        self.samples.push_back(s);
    }

    pub fn latest(&self) -> Option<&HandSample> {
        self.samples.back()
    }

    pub fn oldest(&self) -> Option<&HandSample> {
        self.samples.front()
    }

    /// Drops samples that can no longer anchor a window starting at `t`.
    pub fn forget_before(&mut self, t: Timestamp) {
        while self.samples.len() > 1 && self.samples[1].t_start <= t {
            self.samples.pop_front();
        }
    }

    /// Newest sample at or before `t`, else the oldest one held.
    fn anchor(&self, t: Timestamp) -> Option<&HandSample> {
        let idx = self.samples.partition_point(|s| s.t_start <= t);
        self.samples.get(idx.saturating_sub(1))
    }

    /// Average hand velocity and accumulated rotation since `from`, mapped
    /// into the robot frame by `transform`'s rotation.
    pub fn motion_since(&self, from: Timestamp, transform: &Pose) -> Option<HandMotion> {
        let latest = self.latest()?;
        let anchor = self.anchor(from)?;
        let dt = latest.t_start.saturating_secs_since(anchor.t_start);
        let r = transform.orientation;
        if dt == 0.0 {
            return Some(HandMotion::still(latest.fist));
        }
        let v_xr = (latest.pose.position - anchor.pose.position) / dt;
        let delta_xr = latest.pose.orientation * anchor.pose.orientation.inverse();
        Some(HandMotion {
            velocity: r * v_xr,
            rotation_delta: r * delta_xr * r.inverse(),
            fist: latest.fist,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ReconstructorStats {
    pub accepted: u64,
    pub stale: u64,
    pub singular: u64,
    pub pauses: u64,
}

/// What a frame draws for the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotView {
    pub output: ReconstructionOutput,
    pub reconstructed: bool,
    pub source_t_start: Option<Timestamp>,
}

/// XR-side robot pose reconstruction with the pause rule.
#[derive(Debug, Clone)]
pub struct XrReconstructor {
    cfg: EkfConfig,
    transform: Pose,
    state: EkfState,
    hands: HandHistory,
    pause_next: bool,
    previous: Option<RobotView>,
    stats: ReconstructorStats,
}

impl XrReconstructor {
    pub fn new(cfg: EkfConfig, transform: Pose, initial: Pose, gripper: f64) -> Self {
        let state = EkfState::new(initial, gripper, &cfg);
        XrReconstructor {
            cfg,
            transform,
            state,
            hands: HandHistory::default(),
            pause_next: false,
            previous: None,
            stats: ReconstructorStats::default(),
        }
    }

    pub fn state(&self) -> &EkfState {
        &self.state
    }

    pub fn stats(&self) -> ReconstructorStats {
        self.stats
    }

    pub fn latest_hand(&self) -> Option<&HandSample> {
        self.hands.latest()
    }

    pub fn record_hand(&mut self, s: HandSample) {
        self.hands.push(s);
    }

    /// Update phase. Stale feedback leaves the estimator untouched.
    pub fn on_feedback(&mut self, fb: &FeedbackSample) -> Result<f64, FeedbackError> {
        match ekf_update(&mut self.state, fb, &self.cfg) {
            Ok(nu) => {
                self.stats.accepted += 1;
                if let Some(echo) = fb.t_start_echo {
                    self.hands.forget_before(echo);
                }
                if pause_check(nu, self.cfg.eps_pause) {
                    self.pause_next = true;
                }
                Ok(nu)
            }
            Err(e) => {
                match e {
                    FeedbackError::Stale { .. } => self.stats.stale += 1,
                    FeedbackError::SingularInnovation => self.stats.singular += 1,
                    _ => {}
                }
                Err(e)
            }
        }
    }

    /// Prediction for the current frame.
    pub fn reconstruct(&mut self) -> RobotView {
        if std::mem::take(&mut self.pause_next) {
            if let Some(prev) = &self.previous {
                self.stats.pauses += 1;
                let mut view = prev.clone();
                view.output.paused = true;
                return view;
            }
        }
        let echo = self.state.last_feedback_t_start;
        let (window, motion, source) = match (self.hands.latest(), self.hands.oldest()) {
            (Some(h), Some(first)) => {
                // before any echo, the whole local history is unconfirmed
                let from = echo.unwrap_or(first.t_start);
                (
                    estimation_window(from, h.t_start),
                    self.hands
                        .motion_since(from, &self.transform)
                        .unwrap_or(HandMotion::still(h.fist)),
                    Some(h.t_start).max(echo),
                )
            }
            _ => (0.0, HandMotion::still(self.state.last_gripper), echo),
        };
        let output = ekf_predict(&self.state, window, &motion, &self.cfg).expect("window is finite and >= 0");
        // the frame reflects user motion the robot has not confirmed yet
        let reconstructed = source > echo;
        let view = RobotView {
            output,
            reconstructed,
            source_t_start: source,
        };
        self.previous = Some(view.clone());
        view
    }

    /// Baseline display: last received pose verbatim.
    pub fn verbatim(&self) -> RobotView {
        RobotView {
            output: ReconstructionOutput {
                est_pose: self.state.last_received,
                est_gripper: self.state.last_gripper,
                paused: false,
                window: 0.0,
                covariance: self.state.p,
            },
            reconstructed: false,
            source_t_start: self.state.last_feedback_t_start,
        }
    }

    pub fn last_feedback_t_start(&self) -> Option<Timestamp> {
        self.state.last_feedback_t_start
    }
}

pub fn compose_frame(
    user: &HandSample,
    view: &RobotView,
    feedback_t_start: Option<Timestamp>,
    now: Timestamp,
) -> FrameRecord {
    FrameRecord {
        display_time: now,
        user_pose: user.pose,
        robot_pose_shown: view.output.est_pose,
        gripper_shown: view.output.est_gripper,
        reconstructed: view.reconstructed,
        source_t_start: view.source_t_start,
        feedback_t_start,
    }
}
