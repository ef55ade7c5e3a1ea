//! Robot-side pipeline shared by the simulator and the live mode: listener,
//! controller, encoder sync and talker.

use crate::control::{
    actuator_step, baseline_command, hold_intervals, reconstruct_user_motion, robot_listener_receive, solve_waypoint,
    ActuatorLimits, ActuatorState, Command, ListenOutcome, SoleTarget, StartBuffer, TargetQueue,
};
use crate::feedback::localize;
use crate::kinematics::{solve_ik, IkConfig, JointConfig, KinematicsError};
use crate::netsim::wire::PointBlock;
use crate::pose::{secs_to_nanos, FeedbackSample, HandSample, Timestamp};

use super::config::{Mode, Resolved};
use super::metrics::{interior_stops, RobotState};
use super::sim::{CommandLog, RobotCounters};

pub struct RobotSide<'a> {
    r: &'a Resolved,
    mode: Mode,
    sync_ik: IkConfig,
    pub act: ActuatorState,
    pub joints: JointConfig,
    pub queue: TargetQueue,
    buffer: StartBuffer,
    pub sole: SoleTarget,
    last_fist: Option<f64>,
    latest_fb: Option<FeedbackSample>,
    last_cam: Option<u64>,
    received: u64,
    unreachable: u64,
    pub commands: Vec<CommandLog>,
    pub states: Vec<RobotState>,
    pub consumed: Vec<Timestamp>,
}

impl<'a> RobotSide<'a> {
    pub fn new(r: &'a Resolved) -> Self {
        let cfg = &r.config;
        let (start_pose, start_q) = r.robot_start();
        let p = &r.planner;
        let limits = ActuatorLimits::new(p.v_max, p.a_max, p.omega_max);
        RobotSide {
            r,
            mode: cfg.mode,
            // encoder sync is a warm-started local solve
            sync_ik: IkConfig {
                restarts: 0,
                ..cfg.arm.ik.clone()
            },
            act: ActuatorState::at_rest(start_pose, cfg.robot.initial_gripper, limits),
            joints: start_q,
            queue: TargetQueue::new(),
            buffer: StartBuffer::new(cfg.robot.start_buffer),
            sole: SoleTarget::default(),
            last_fist: None,
            latest_fb: None,
            last_cam: None,
            received: 0,
            unreachable: 0,
            commands: Vec::new(),
            states: Vec::new(),
            consumed: Vec::new(),
        }
    }

    /// Listener: one received hand sample.
    pub fn receive(&mut self, h: &HandSample) {
        self.received += 1;
        let r = self.r;
        let ik = &r.config.arm.ik;
        match self.mode {
            Mode::Telexr => {
                let out = robot_listener_receive(h, &r.arm, &r.transform, &mut self.queue, &self.joints, ik);
                if out == ListenOutcome::Unreachable {
                    self.unreachable += 1;
                }
            }
            Mode::Baseline => {
                let seed = self.sole.target.as_ref().map_or(&self.joints, |w| &w.joints);
                match solve_waypoint(h, &r.arm, &r.transform, seed, ik) {
                    Some(wp) => self.sole.receive(wp),
                    None => self.unreachable += 1,
                }
            }
        }
    }

    /// One control period starting at `now`.
    pub fn control(&mut self, now: Timestamp) {
        let planner = &self.r.planner;
        let (cmd, pending) = match self.mode {
            Mode::Telexr => {
                if self.buffer.observe(self.queue.len()) {
                    if let Some(h) = self.queue.head() {
                        self.last_fist = Some(h.fist);
                    }
                    let reached = self.queue.prune_reached(&self.act.ee_pose, planner.eps_reach);
                    self.consumed.extend(reached);
                    let mut c = reconstruct_user_motion(&self.act, &self.queue, planner);
                    if self.queue.is_empty() {
                        // nothing left to follow: settle the gripper
                        if let Some(f) = self.last_fist {
                            c.gripper_rate = (f - self.act.gripper) / planner.t_c;
                        }
                    }
                    (c, !self.queue.is_empty())
                } else {
                    (Command::hold(), false)
                }
            }
            Mode::Baseline => {
                let pending = self.sole.target.as_ref().is_some_and(|w| {
                    (w.cartesian.position - self.act.ee_pose.position).norm() > planner.eps_reach
                });
                (baseline_command(&self.act, &self.sole, planner), pending)
            }
        };
        self.act = actuator_step(&self.act, &cmd, planner.t_c).expect("t_c validated");
        self.commands.push(CommandLog {
            time: now,
            hold: cmd.is_hold(),
            pending,
        });
        self.states.push(RobotState {
            time: Timestamp(now.nanos() + secs_to_nanos(planner.t_c)),
            ee_pose: self.act.ee_pose,
            gripper: self.act.gripper,
        });
    }

    /// Encoder read: joints synced to the plant, then localized.
    pub fn encoder(&mut self, now: Timestamp) {
        let r = self.r;
        self.joints = match solve_ik(&r.arm, &self.joints, &self.act.ee_pose, &self.sync_ik) {
            Ok(sol) => sol.q,
            Err(KinematicsError::Unreachable { best, .. }) => best,
            Err(_) => self.joints.clone(),
        };
        let echo = match self.mode {
            Mode::Telexr => self.queue.newest_t_start(),
            Mode::Baseline => self.sole.target.as_ref().map(|w| w.t_start),
        };
        self.latest_fb = localize(&r.arm, &self.joints, self.act.gripper, echo, now).ok();
    }

    /// Talker tick: the latest localization, plus the budgeted cloud on the
    /// first tick after each camera capture. `None` before the first encoder read.
    pub fn talker(&mut self, now: Timestamp) -> Option<(FeedbackSample, Option<PointBlock>)> {
        let fb = self.latest_fb.clone()?;
        let cam_idx = now.nanos() / secs_to_nanos(self.r.config.periods.camera);
        let cloud = match &self.r.cloud {
            Some(plan) if self.last_cam != Some(cam_idx) => {
                self.last_cam = Some(cam_idx);
                Some(plan.block.clone())
            }
            _ => None,
        };
        Some((fb, cloud))
    }

    pub fn counters(&self) -> RobotCounters {
        let pending: Vec<(bool, bool)> = self.commands.iter().map(|c| (c.hold, c.pending)).collect();
        let holds: Vec<bool> = self.commands.iter().map(|c| c.hold).collect();
        RobotCounters {
            received: self.received,
            stale_discards: self.queue.stale_discards(),
            duplicate_discards: self.queue.duplicate_discards(),
            unreachable: self.unreachable,
            consumed: self.consumed.len() as u64,
            hold_intervals_pending: hold_intervals(&pending),
            interior_stops: interior_stops(&holds),
        }
    }
}
