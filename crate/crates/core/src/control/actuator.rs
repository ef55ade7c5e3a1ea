//! Velocity-limited end-effector plant.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::planner::Command;
use super::ControlError;
use crate::pose::{renormalize, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub omega_max: f64,
}

impl ActuatorLimits {
    pub fn new(v_max: f64, a_max: f64, omega_max: f64) -> Self {
        ActuatorLimits { v_max, a_max, omega_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorState {
    pub ee_pose: Pose,
    pub linear_velocity: Vector3<f64>,
    pub gripper: f64,
    pub limits: ActuatorLimits,
}

impl ActuatorState {
    pub fn at_rest(ee_pose: Pose, gripper: f64, limits: ActuatorLimits) -> Self {
        ActuatorState {
            ee_pose,
            linear_velocity: Vector3::zeros(),
            gripper: gripper.clamp(0.0, 1.0),
            limits,
        }
    }
}

pub fn actuator_step(state: &ActuatorState, cmd: &Command, dt: f64) -> Result<ActuatorState, ControlError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::InvalidStep(dt));
    }
    let lim = state.limits;

    let mut dv = cmd.velocity - state.linear_velocity;
    let max_dv = lim.a_max * dt;
    let n = dv.norm();
    if n > max_dv {
        dv *= max_dv / n;
    }
    let mut v = state.linear_velocity + dv;
    let speed = v.norm();
    if speed > lim.v_max {
        v *= lim.v_max / speed;
    }

    let max_angle = lim.omega_max * dt;
    let step = match cmd.orientation_step.axis_angle() {
        Some((axis, angle)) if angle > max_angle => UnitQuaternion::from_axis_angle(&axis, max_angle),
        _ => cmd.orientation_step,
    };

    Ok(ActuatorState {
        ee_pose: Pose::new(
            state.ee_pose.position + v * dt,
            renormalize(step * state.ee_pose.orientation),
        ),
        linear_velocity: v,
        gripper: (state.gripper + cmd.gripper_rate * dt).clamp(0.0, 1.0),
        limits: lim,
    })
}
