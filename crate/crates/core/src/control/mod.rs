//! Robot-side control: trace playback, listener and target queue, motion
//! reconstruction and the actuator plant.

pub mod actuator;
pub mod planner;
pub mod queue;
pub mod trace;

pub use actuator::{actuator_step, ActuatorLimits, ActuatorState};
pub use planner::{baseline_command, reconstruct_user_motion, Command, PlannerConfig};
pub use queue::{
    robot_listener_receive, solve_waypoint, InsertOutcome, ListenOutcome, SoleTarget, StartBuffer, TargetQueue,
    Waypoint,
};
pub use trace::{MotionTrace, TraceError, TraceSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("time step must be > 0, got {0}")]
    InvalidStep(f64),
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
}

/// Hold intervals: maximal runs of hold commands issued while a target was
/// pending, excluding a run that lasts to the end of the log.
pub fn hold_intervals(log: &[(bool, bool)]) -> usize {
    // (is_hold, target_pending)
    let mut count = 0;
    let mut in_run = false;
    for &(hold, pending) in log {
        if hold && pending {
            in_run = true;
        } else if in_run {
            count += 1;
            in_run = false;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::JointConfig;
    use crate::pose::Timestamp;

    /// Zero-latency loop: every hand sample is queued at its tick, the robot
    /// runs at T_c. Returns per-tick position error against the latest sample.
    fn follow(spec: TraceSpec, cfg: &PlannerConfig) -> (Vec<f64>, TargetQueue) {
        let trace = spec.generate().unwrap();
        let lim = ActuatorLimits::new(cfg.v_max, cfg.a_max, cfg.omega_max);
        let mut st = ActuatorState::at_rest(trace.first().pose, 0.0, lim);
        let mut q = TargetQueue::new();
        let tc = crate::pose::secs_to_nanos(cfg.t_c);
        let end = trace.last().t_start.nanos() + 2_000_000_000;
        let mut latest = trace.first().pose;
        let mut errs = Vec::new();
        let mut now = 0;
        while now <= end {
            if let Some(s) = trace.trace_next(Timestamp(now)) {
                latest = s.pose;
                q.insert(Waypoint {
                    t_start: s.t_start,
                    cartesian: s.pose,
                    joints: JointConfig(vec![]),
                    fist: s.fist,
                });
            }
            q.prune_reached(&st.ee_pose, cfg.eps_reach);
            let c = reconstruct_user_motion(&st, &q, cfg);
            st = actuator_step(&st, &c, cfg.t_c).unwrap();
            errs.push((st.ee_pose.position - latest.position).norm());
            now += tc;
        }
        (errs, q)
    }

    #[test]
    fn stationary_converges_within_bound() {
        let cfg = PlannerConfig::default();
        let (errs, q) = follow(TraceSpec::Stationary { duration: 0.5, period: 0.02 }, &cfg);
        assert!(q.is_empty());
        assert!(*errs.last().unwrap() <= cfg.eps_reach + cfg.v_max * cfg.t_c);
    }

    #[test]
    fn slow_trace_is_followed_and_drained() {
        let cfg = PlannerConfig::default();
        for spec in [
            TraceSpec::Sinusoid { duration: 4.0, period: 0.02, amplitude: 0.05, frequency: 0.25, seed: 1 },
            TraceSpec::PickAndPlace { duration: 6.0, period: 0.02, reach: 0.15, seed: 4 },
        ] {
            let (errs, q) = follow(spec, &cfg);
            assert!(q.is_empty(), "queue not drained: {}", q.len());
            assert!(*errs.last().unwrap() <= cfg.eps_reach + cfg.v_max * cfg.t_c);
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            assert!(worst < 0.05, "lagged {worst}");
        }
    }

    #[test]
    fn hold_interval_counting() {
        let log = [(false, true), (true, true), (true, true), (false, true), (true, false), (true, true)];
        assert_eq!(hold_intervals(&log), 1);
    }
}
