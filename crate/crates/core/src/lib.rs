//! Simulation library for XR robot teleoperation with dual-sided latency
//! compensation.
//!
//! The XR side and the robot side each reconstruct the counterpart's state
//! locally while messages cross degradable channels. Modules:
//!
//! - [`pose`]: timestamps, poses and the samples exchanged between sides
//! - [`kinematics`]: D-H forward kinematics, Jacobian, damped-least-squares IK
//! - [`netsim`]: lossy/jittery channel model, wire codec, UDP transport
//! - [`control`]: motion traces, target queue, trajectory planner, actuator plant
//! - [`feedback`]: robot localization and the XR-side pose estimator
//! - [`pointcloud`]: organized clouds, depth-image Canny, bandwidth-bounded scaling
//! - [`scheduler`]: execution-time profiling and GPU-contention timelines
//! - [`harness`]: discrete-event simulation, metrics, config and outputs

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod feedback;
pub mod harness;
pub mod kinematics;
pub mod netsim;
pub mod pointcloud;
pub mod pose;
pub mod scheduler;

pub use pose::{FeedbackSample, FrameRecord, HandSample, Pose, PoseError, Timestamp};
