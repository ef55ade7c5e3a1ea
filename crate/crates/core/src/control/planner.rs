//! Online trapezoidal planner that turns queued waypoints into per-tick
//! velocity commands.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::actuator::ActuatorState;
use super::queue::{SoleTarget, TargetQueue};
use super::ControlError;
use crate::pose::{slerp, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Control period T_c in seconds.
    pub t_c: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub omega_max: f64,
    pub eps_reach: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            t_c: 0.005,
            v_max: 0.5,
            a_max: 2.0,
            omega_max: 2.0,
            eps_reach: 0.002,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let positive = [
            ("t_c", self.t_c),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("omega_max", self.omega_max),
            ("eps_reach", self.eps_reach),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControlError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One control-period command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub velocity: Vector3<f64>,
    /// Rotation to apply (left-multiplied) during the period.
    pub orientation_step: UnitQuaternion<f64>,
    /// Gripper intensity rate, 1/s.
    pub gripper_rate: f64,
}

impl Command {
    pub fn hold() -> Self {
        Command {
            velocity: Vector3::zeros(),
            orientation_step: UnitQuaternion::identity(),
            gripper_rate: 0.0,
        }
    }

    pub fn is_hold(&self) -> bool {
        self.velocity == Vector3::zeros()
    }
}

/// Plans toward the queue head. The speed profile uses the remaining path
/// through every queued waypoint so the arm only slows for the last one.
pub fn reconstruct_user_motion(state: &ActuatorState, queue: &TargetQueue, cfg: &PlannerConfig) -> Command {
    let Some(head) = queue.head() else {
        return Command::hold();
    };
    let mut rest = 0.0;
    let mut prev = head.cartesian.position;
    for w in queue.iter().skip(1) {
        rest += (w.cartesian.position - prev).norm();
        prev = w.cartesian.position;
    }
    plan(state, &head.cartesian, head.fist, rest, cfg)
}

/// Baseline: drive to the single latest target and stop there.
pub fn baseline_command(state: &ActuatorState, target: &SoleTarget, cfg: &PlannerConfig) -> Command {
    match &target.target {
        Some(w) if (w.cartesian.position - state.ee_pose.position).norm() > cfg.eps_reach => {
            plan(state, &w.cartesian, w.fist, 0.0, cfg)
        }
        Some(w) => {
            // position reached: only finish the gripper
            let mut c = Command::hold();
            c.gripper_rate = (w.fist - state.gripper) / cfg.t_c;
            c
        }
        None => Command::hold(),
    }
}

fn plan(state: &ActuatorState, head: &Pose, fist: f64, rest: f64, cfg: &PlannerConfig) -> Command {
    let delta = head.position - state.ee_pose.position;
    let d = delta.norm();
    let remaining = d + rest;
    let speed = cfg
        .v_max
        .min((2.0 * cfg.a_max * remaining).sqrt())
        .min(remaining / cfg.t_c);
    let velocity = if d > 0.0 { delta * (speed / d) } else { Vector3::zeros() };

    // fraction of the distance to the head covered this period
    let step_len = speed * cfg.t_c;
    let frac = if d > step_len && d > 0.0 { step_len / d } else { 1.0 };
    let q = state.ee_pose.orientation;
    let orientation_step = slerp(&q, &head.orientation, frac) * q.inverse();

    let travel_time = if speed > 0.0 { (d / speed).max(cfg.t_c) } else { cfg.t_c };
    Command {
        velocity,
        orientation_step,
        gripper_rate: (fist - state.gripper) / travel_time,
    }
}

/// Closed-form trapezoidal speed for an ideal point mass that must stop
/// after `remaining` meters: accelerate, cruise at `v_max`, decelerate.
pub fn trapezoid_speed(remaining: f64, v_max: f64, a_max: f64) -> f64 {
    v_max.min((2.0 * a_max * remaining.max(0.0)).sqrt())
}
