//! Constant-velocity Kalman filter over end-effector position.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, SymmetricEigen, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::FeedbackError;
use crate::pose::{FeedbackSample, Pose, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfConfig {
    /// Process noise spectral density, applied to every state.
    pub q_diag: f64,
    /// Position measurement variance, m².
    pub r_diag: f64,
    /// Innovation norm above which the next output is held.
    pub eps_pause: f64,
    /// Weight of the local hand velocity in the extrapolation.
    pub beta: f64,
    /// Initial covariance diagonal.
    pub p0_diag: f64,
    /// Gripper extrapolation speed toward the fist score, 1/s.
    pub gripper_rate: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            q_diag: 1e-4,
            r_diag: 1e-6,
            eps_pause: 0.05,
            beta: 0.5,
            p0_diag: 1.0,
            gripper_rate: 2.0,
        }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        for (name, v) in [
            ("q_diag", self.q_diag),
            ("r_diag", self.r_diag),
            ("eps_pause", self.eps_pause),
            ("p0_diag", self.p0_diag),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FeedbackError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(FeedbackError::InvalidConfig(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        if !(self.gripper_rate >= 0.0) {
            return Err(FeedbackError::InvalidConfig("gripper_rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    /// `[position; velocity]`
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    pub last_orientation: UnitQuaternion<f64>,
    pub last_gripper: f64,
    pub last_feedback_t_start: Option<Timestamp>,
    /// Robot capture time of the last accepted feedback.
    pub last_captured: Option<Timestamp>,
    /// Last received end-effector pose, verbatim.
    pub last_received: Pose,
}

impl EkfState {
    pub fn new(initial: Pose, gripper: f64, cfg: &EkfConfig) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&initial.position);
        EkfState {
            x,
            p: Matrix6::identity() * cfg.p0_diag,
            last_orientation: initial.orientation,
            last_gripper: gripper,
            last_feedback_t_start: None,
            last_captured: None,
            last_received: initial,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into()
    }

    /// Whether `fb` is not newer than the last accepted feedback, ordered by
    /// (echo, capture time).
    pub fn is_stale(&self, fb: &FeedbackSample) -> bool {
        (fb.t_start_echo, Some(fb.captured)) <= (self.last_feedback_t_start, self.last_captured)
    }
}

/// Local user motion over the estimation window, already in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandMotion {
    pub velocity: Vector3<f64>,
    /// Rotation accumulated over the window (left-multiplied).
    pub rotation_delta: UnitQuaternion<f64>,
    pub fist: f64,
}

impl HandMotion {
    pub fn still(fist: f64) -> Self {
        HandMotion {
            velocity: Vector3::zeros(),
            rotation_delta: UnitQuaternion::identity(),
            fist,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionOutput {
    pub est_pose: Pose,
    pub est_gripper: f64,
    pub paused: bool,
    pub window: f64,
    /// Predicted covariance `F P Fᵀ + Q·window`.
    pub covariance: Matrix6<f64>,
}

impl ReconstructionOutput {
    /// Extrapolation was applied; false when the frame shows feedback verbatim.
    pub fn extrapolated(&self) -> bool {
        self.window > 0.0
    }
}

pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    f
}

fn symmetrize(p: &Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

pub fn propagate_covariance(p: &Matrix6<f64>, dt: f64, q_diag: f64) -> Matrix6<f64> {
    let f = transition(dt);
    symmetrize(&(f * p * f.transpose() + Matrix6::identity() * (q_diag * dt)))
}

/// Extrapolates the last feedback over `window` seconds. With a zero window
/// the last received pose is returned verbatim.
pub fn ekf_predict(state: &EkfState, window: f64, hand: &HandMotion, cfg: &EkfConfig) -> Result<ReconstructionOutput, FeedbackError> {
    if !(window >= 0.0 && window.is_finite()) {
        return Err(FeedbackError::InvalidWindow(window));
    }
    let covariance = propagate_covariance(&state.p, window, cfg.q_diag);
    if window == 0.0 {
        return Ok(ReconstructionOutput {
            est_pose: state.last_received,
            est_gripper: state.last_gripper,
            paused: false,
            window,
            covariance,
        });
    }
    let v = state.velocity() * (1.0 - cfg.beta) + hand.velocity * cfg.beta;
    let position = state.position() + v * window;
    let orientation = hand.rotation_delta * state.last_orientation;
    let gap = hand.fist - state.last_gripper;
    let max_move = cfg.gripper_rate * window;
    let gripper = state.last_gripper + gap.clamp(-max_move, max_move);
    Ok(ReconstructionOutput {
        est_pose: Pose::new(position, orientation),
        est_gripper: gripper.clamp(0.0, 1.0),
        paused: false,
        window,
        covariance,
    })
}

/// Propagates to the capture time of `fb` and fuses its position. Returns
/// the innovation norm.
pub fn ekf_update(state: &mut EkfState, fb: &FeedbackSample, cfg: &EkfConfig) -> Result<f64, FeedbackError> {
    if state.is_stale(fb) {
        return Err(FeedbackError::Stale {
            echo: fb.t_start_echo,
            last: state.last_feedback_t_start,
        });
    }
    let dt = state.last_captured.map_or(0.0, |t| fb.captured.saturating_secs_since(t));
    let x = transition(dt) * state.x;
    let p = propagate_covariance(&state.p, dt, cfg.q_diag);

    let h = Matrix3x6::<f64>::identity();
    let innovation = fb.ee_pose.position - h * x;
    let s = h * p * h.transpose() + Matrix3::identity() * cfg.r_diag;
    let s_inv = s.try_inverse().ok_or(FeedbackError::SingularInnovation)?;
    let k = p * h.transpose() * s_inv;

    state.x = x + k * innovation;
    state.p = symmetrize(&((Matrix6::identity() - k * h) * p));
    state.last_orientation = fb.ee_pose.orientation;
    state.last_gripper = fb.gripper;
    state.last_feedback_t_start = fb.t_start_echo;
    state.last_captured = Some(fb.captured);
    state.last_received = fb.ee_pose;
    Ok(innovation.norm())
}

pub fn pause_check(innovation: f64, eps_pause: f64) -> bool {
    innovation > eps_pause
}

pub fn min_eigenvalue(p: &Matrix6<f64>) -> f64 {
    SymmetricEigen::new(*p).eigenvalues.min()
}
