//! Metrics over the logs of one run.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::pose::{pose_distance, FrameRecord, Pose, Timestamp};
use crate::scheduler::nearest_rank;

/// Which frames end an M2M interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum M2mSemantics {
    /// Any frame whose source (actual or reconstructed) covers the sample.
    Reconstructed,
    /// Only frames built on feedback that echoes the sample.
    Actual,
}

/// Per hand sample, seconds from capture to the first frame reflecting it;
/// `None` when no frame ever did (censored).
pub fn m2m_latency(frames: &[FrameRecord], sent: &[Timestamp], semantics: M2mSemantics) -> Vec<Option<f64>> {
    // running max of the covered stamp, so "first frame with stamp >= t" is
    // a binary search
    let mut covered = Vec::with_capacity(frames.len());
    let mut best: Option<Timestamp> = None;
    for f in frames {
        let stamp = match semantics {
            M2mSemantics::Reconstructed => f.source_t_start,
            M2mSemantics::Actual => f.feedback_t_start,
        };
        best = best.max(stamp);
        covered.push(best);
    }
    sent.iter()
        .map(|&t| {
            let i = covered.partition_point(|c| *c < Some(t));
            frames.get(i).map(|f| f.display_time.saturating_secs_since(t))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub censored: usize,
    pub mean: Option<f64>,
    pub p50: Option<f64>,
    pub p99: Option<f64>,
}

pub fn summarize(samples: &[Option<f64>]) -> Summary {
    let mut xs: Vec<f64> = samples.iter().flatten().copied().collect();
    let censored = samples.len() - xs.len();
    if xs.is_empty() {
        return Summary {
            count: 0,
            censored,
            ..Summary::default()
        };
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    Summary {
        count: xs.len(),
        censored,
        mean: Some(mean),
        p50: Some(nearest_rank(&mut xs, 50)),
        p99: Some(nearest_rank(&mut xs, 99)),
    }
}

/// Per frame (position m, angle rad) between the user's hand and the shown
/// robot pose carried back into the XR frame.
pub fn teleop_error(frames: &[FrameRecord], transform: &Pose) -> Vec<(f64, f64)> {
    let back = transform.inverse();
    frames
        .iter()
        .map(|f| pose_distance(&f.user_pose, &back.compose(&f.robot_pose_shown)).expect("frame poses are unit"))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub frames: usize,
    pub mean_position: Option<f64>,
    pub mean_angle: Option<f64>,
    pub p99_position: Option<f64>,
    pub p99_angle: Option<f64>,
}

pub fn summarize_error(series: &[(f64, f64)]) -> ErrorSummary {
    let pos: Vec<Option<f64>> = series.iter().map(|e| Some(e.0)).collect();
    let ang: Vec<Option<f64>> = series.iter().map(|e| Some(e.1)).collect();
    let (p, a) = (summarize(&pos), summarize(&ang));
    ErrorSummary {
        frames: series.len(),
        mean_position: p.mean,
        mean_angle: a.mean,
        p99_position: p.p99,
        p99_angle: a.p99,
    }
}

/// One logged robot state: time, end-effector pose and gripper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub time: Timestamp,
    pub ee_pose: Pose,
    pub gripper: f64,
}

pub const GRIPPER_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Completion {
    /// Seconds since the start of the run.
    pub time: Option<f64>,
    pub censored: bool,
}

/// First logged state at or after `last_emit` with the end effector within
/// `eps_reach` of `final_target` and the gripper within 0.05 of `final_fist`.
pub fn completion_time(
    states: &[RobotState],
    last_emit: Timestamp,
    final_target: &Pose,
    final_fist: f64,
    eps_reach: f64,
) -> Completion {
    let hit = states.iter().find(|s| {
        s.time >= last_emit
            && (s.ee_pose.position - final_target.position).norm() <= eps_reach
            && (s.gripper - final_fist).abs() <= GRIPPER_TOLERANCE
    });
    match hit {
        Some(s) => Completion {
            time: Some(s.time.as_secs_f64()),
            censored: false,
        },
        None => Completion {
            time: None,
            censored: true,
        },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCount {
    pub sent: u64,
    pub received: u64,
}

impl ClassCount {
    /// `100·(sent − received)/sent`, absent when nothing was sent.
    pub fn drop_pct(&self) -> Option<f64> {
        (self.sent > 0).then(|| 100.0 * (self.sent - self.received.min(self.sent)) as f64 / self.sent as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassDrops {
    pub sent: u64,
    pub received: u64,
    pub pct: Option<f64>,
}

pub fn drop_pct(counts: &BTreeMap<&'static str, ClassCount>) -> BTreeMap<String, ClassDrops> {
    counts
        .iter()
        .map(|(k, c)| {
            (
                k.to_string(),
                ClassDrops {
                    sent: c.sent,
                    received: c.received,
                    pct: c.drop_pct(),
                },
            )
        })
        .collect()
}

/// Stops in the middle of a task: maximal runs of hold commands that come
/// after the first motion command and are followed by another one.
pub fn interior_stops(holds: &[bool]) -> usize {
    let Some(first) = holds.iter().position(|h| !h) else {
        return 0;
    };
    let mut count = 0;
    let mut in_run = false;
    for &h in &holds[first..] {
        if h {
            in_run = true;
        } else if in_run {
            count += 1;
            in_run = false;
        }
    }
    count
}

/// Frames whose drawn robot pose differs from the frame before.
pub fn pose_updates(frames: &[FrameRecord]) -> usize {
    frames
        .windows(2)
        .filter(|w| w[0].robot_pose_shown != w[1].robot_pose_shown)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn frame(t: u64, x: f64, source: Option<u64>, fb: Option<u64>) -> FrameRecord {
        FrameRecord {
            display_time: Timestamp(t),
            user_pose: Pose::from_translation(0.0, 0.0, 0.0),
            robot_pose_shown: Pose::from_translation(x, 0.0, 0.0),
            gripper_shown: 0.0,
            reconstructed: source > fb,
            source_t_start: source.map(Timestamp),
            feedback_t_start: fb.map(Timestamp),
        }
    }

    #[test]
    fn m2m_uses_first_covering_frame() {
        let s = 1_000_000_000;
        let frames = vec![
            frame(s, 0.0, Some(0), None),
            frame(2 * s, 0.0, Some(s), None),
            frame(3 * s, 0.0, Some(s), Some(0)),
        ];
        let sent = [Timestamp(0), Timestamp(s), Timestamp(5 * s)];
        assert_eq!(
            m2m_latency(&frames, &sent, M2mSemantics::Reconstructed),
            vec![Some(1.0), Some(1.0), None]
        );
        assert_eq!(
            m2m_latency(&frames, &sent, M2mSemantics::Actual),
            vec![Some(3.0), None, None]
        );
        let sum = summarize(&m2m_latency(&frames, &sent, M2mSemantics::Reconstructed));
        assert_eq!((sum.count, sum.censored, sum.mean), (2, 1, Some(1.0)));
    }

    #[test]
    fn m2m_ignores_a_later_dip() {
        // a paused frame repeating an older source does not hide a newer one
        let frames = vec![frame(10, 0.0, Some(5), None), frame(20, 0.0, Some(3), None)];
        let got = m2m_latency(&frames, &[Timestamp(4)], M2mSemantics::Reconstructed);
        assert_relative_eq!(got[0].unwrap(), 6e-9);
    }

    #[test]
    fn error_zero_when_aligned_and_constant_offset() {
        let t = Pose::from_translation(0.5, 0.0, 0.2);
        let mut f = frame(0, 0.0, None, None);
        f.user_pose = Pose::from_translation(0.1, 0.2, 0.3);
        f.robot_pose_shown = t.compose(&f.user_pose);
        assert_relative_eq!(teleop_error(&[f], &t)[0].0, 0.0, epsilon = 1e-12);
        f.robot_pose_shown = t.compose(&Pose::from_translation(0.11, 0.2, 0.3));
        let e = summarize_error(&teleop_error(&[f, f, f], &t));
        assert_relative_eq!(e.mean_position.unwrap(), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn completion_needs_position_and_gripper() {
        let target = Pose::from_translation(1.0, 0.0, 0.0);
        let st = |t, x, g| RobotState {
            time: Timestamp(t),
            ee_pose: Pose::from_translation(x, 0.0, 0.0),
            gripper: g,
        };
        let log = [st(1, 1.0, 0.0), st(2, 0.5, 1.0), st(3, 0.999, 0.96), st(4, 1.0, 1.0)];
        let c = completion_time(&log, Timestamp(2), &target, 1.0, 0.002);
        assert_relative_eq!(c.time.unwrap(), 3e-9);
        let c = completion_time(&log[..2], Timestamp(0), &target, 1.0, 0.002);
        assert!(c.censored && c.time.is_none());
    }

    #[test]
    fn drop_percentages() {
        let mut m = BTreeMap::new();
        m.insert("pose", ClassCount { sent: 200, received: 180 });
        m.insert("cloud", ClassCount { sent: 0, received: 0 });
        let d = drop_pct(&m);
        assert_eq!(d["pose"].pct, Some(10.0));
        assert_eq!(d["cloud"].pct, None);
    }

    #[test]
    fn interior_stops_skip_leading_and_trailing_holds() {
        assert_eq!(interior_stops(&[true, true, false, false, true]), 0);
        assert_eq!(interior_stops(&[true, false, true, true, false, true, false, true]), 2);
        assert_eq!(interior_stops(&[true, true]), 0);
    }
}
