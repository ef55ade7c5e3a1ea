//! Robot-side listener and the t_start-ordered target queue.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::kinematics::{solve_ik, ArmModel, IkConfig, JointConfig};
use crate::pose::{map_xr_to_robot, HandSample, Pose, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_start: Timestamp,
    pub cartesian: Pose,
    pub joints: JointConfig,
    pub fist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// Not newer than the newest consumed waypoint.
    Stale,
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListenOutcome {
    Inserted,
    Stale,
    Duplicate,
    Unreachable,
}

#[derive(Debug, Clone, Default)]
pub struct TargetQueue {
    entries: VecDeque<Waypoint>,
    newest_consumed: Option<Timestamp>,
    consumed: Vec<Timestamp>,
    stale_discards: u64,
    duplicate_discards: u64,
}

impl TargetQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> Option<&Waypoint> {
        self.entries.front()
    }

    pub fn back(&self) -> Option<&Waypoint> {
        self.entries.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Waypoint> {
        self.entries.iter()
    }

    pub fn newest_consumed(&self) -> Option<Timestamp> {
        self.newest_consumed
    }

    /// t_start of every pruned entry, in consumption order.
    pub fn consumed(&self) -> &[Timestamp] {
        &self.consumed
    }

    pub fn stale_discards(&self) -> u64 {
        self.stale_discards
    }

    pub fn duplicate_discards(&self) -> u64 {
        self.duplicate_discards
    }

    /// Newest t_start the robot is working on or has finished: the queue tail,
    /// or the last consumed entry when empty.
    pub fn newest_t_start(&self) -> Option<Timestamp> {
        self.entries.back().map(|w| w.t_start).or(self.newest_consumed)
    }

    pub fn is_stale(&self, t: Timestamp) -> bool {
        self.newest_consumed.is_some_and(|c| t <= c)
    }

    pub fn insert(&mut self, wp: Waypoint) -> InsertOutcome {
        if self.is_stale(wp.t_start) {
            self.stale_discards += 1;
            return InsertOutcome::Stale;
        }
        let idx = self.entries.partition_point(|e| e.t_start < wp.t_start);
        if self.entries.get(idx).is_some_and(|e| e.t_start == wp.t_start) {
            self.duplicate_discards += 1;
            return InsertOutcome::Duplicate;
        }
        self.entries.insert(idx, wp);
        InsertOutcome::Inserted
    }

    /// Pops the head while it lies within `eps` of `position`. Returns the
    /// removed t_starts in order.
    pub fn prune_reached(&mut self, ee: &Pose, eps: f64) -> Vec<Timestamp> {
        let mut removed = Vec::new();
        while let Some(head) = self.entries.front() {
            if (head.cartesian.position - ee.position).norm() > eps {
                break;
            }
            let t = head.t_start;
            self.entries.pop_front();
            self.newest_consumed = Some(t);
            self.consumed.push(t);
            removed.push(t);
        }
        removed
    }
}

/// Maps a received hand sample into a waypoint and queues it. IK is seeded
/// from the queue tail, or `current` when the queue is empty.
pub fn robot_listener_receive(
    sample: &HandSample,
    model: &ArmModel,
    transform: &Pose,
    queue: &mut TargetQueue,
    current: &JointConfig,
    ik: &IkConfig,
) -> ListenOutcome {
    if queue.is_stale(sample.t_start) {
        queue.stale_discards += 1;
        return ListenOutcome::Stale;
    }
    let Some(wp) = solve_waypoint(sample, model, transform, queue.back().map_or(current, |w| &w.joints), ik)
    else {
        return ListenOutcome::Unreachable;
    };
    match queue.insert(wp) {
        InsertOutcome::Inserted => ListenOutcome::Inserted,
        InsertOutcome::Stale => ListenOutcome::Stale,
        InsertOutcome::Duplicate => ListenOutcome::Duplicate,
    }
}

pub fn solve_waypoint(
    sample: &HandSample,
    model: &ArmModel,
    transform: &Pose,
    seed: &JointConfig,
    ik: &IkConfig,
) -> Option<Waypoint> {
    let target = map_xr_to_robot(&sample.pose, transform).ok()?;
    let sol = solve_ik(model, seed, &target, ik).ok()?;
    Some(Waypoint {
        t_start: sample.t_start,
        cartesian: target,
        joints: sol.q,
        fist: sample.fist,
    })
}

/// Withholds motion until the queue has held `k` entries at least once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StartBuffer {
    k: usize,
    ready: bool,
}

impl StartBuffer {
    pub fn new(k: usize) -> Self {
        StartBuffer { k, ready: k == 0 }
    }

    pub fn observe(&mut self, queue_len: usize) -> bool {
        self.ready |= queue_len >= self.k;
        self.ready
    }

    pub fn ready(&self) -> bool {
        self.ready
    }
}

/// Baseline listener state: the latest received pose replaces the target,
/// whatever its t_start.
#[derive(Debug, Clone, Default)]
pub struct SoleTarget {
    pub target: Option<Waypoint>,
}

impl SoleTarget {
    pub fn receive(&mut self, wp: Waypoint) {
        self.target = Some(wp);
    }
}
