//! Recorded or generated hand motion, played back at the hand-tracking period.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{secs_to_nanos, HandSample, Pose, Timestamp};

pub const TRACE_HEADER: [&str; 9] = ["t_ns", "x", "y", "z", "qw", "qx", "qy", "qz", "fist"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid generator parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrace {
    start: Timestamp,
    period_ns: u64,
    samples: Vec<HandSample>,
}

impl MotionTrace {
    /// Samples are stamped `start + i·period`.
    pub fn from_poses(
        start: Timestamp,
        period_ns: u64,
        poses: impl IntoIterator<Item = (Pose, f64)>,
    ) -> Result<Self, TraceError> {
        if period_ns == 0 {
            return Err(TraceError::Parameter("period must be > 0".into()));
        }
        let samples: Vec<_> = poses
            .into_iter()
            .enumerate()
            .map(|(i, (pose, fist))| HandSample::new(start + i as u64 * period_ns, pose, fist))
            .collect();
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(MotionTrace {
            start,
            period_ns,
            samples,
        })
    }

    /// Validates strictly increasing, evenly spaced stamps.
    pub fn from_samples(samples: Vec<HandSample>) -> Result<Self, TraceError> {
        let first = samples.first().ok_or(TraceError::Empty)?.t_start;
        let period_ns = if samples.len() > 1 {
            samples[1].t_start.nanos().saturating_sub(first.nanos())
        } else {
            1
        };
        if period_ns == 0 {
            return Err(TraceError::Row {
                row: 2,
                message: "timestamps not strictly increasing".into(),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if s.t_start != first + i as u64 * period_ns {
                return Err(TraceError::Row {
                    row: i + 1,
                    message: format!("t_ns {} breaks the {period_ns} ns spacing", s.t_start.nanos()),
                });
            }
            if !(0.0..=1.0).contains(&s.fist) {
                return Err(TraceError::Row {
                    row: i + 1,
                    message: format!("fist {} outside [0, 1]", s.fist),
                });
            }
        }
        Ok(MotionTrace {
            start: first,
            period_ns,
            samples,
        })
    }

    pub fn samples(&self) -> &[HandSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period_ns(&self) -> u64 {
        self.period_ns
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn first(&self) -> &HandSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &HandSample {
        self.samples.last().expect("non-empty")
    }

    /// Sample due exactly at tick `now`, stamped with `t_start = now`.
    pub fn trace_next(&self, now: Timestamp) -> Option<HandSample> {
        let since = now.nanos().checked_sub(self.start.nanos())?;
        if since % self.period_ns != 0 {
            return None;
        }
        let mut s = *self.samples.get((since / self.period_ns) as usize)?;
        s.t_start = now;
        Some(s)
    }

    pub fn read_csv(reader: impl Read) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
            return Err(TraceError::Row {
                row: 0,
                message: format!("expected header {}", TRACE_HEADER.join(",")),
            });
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let err = |m: String| TraceError::Row { row, message: m };
            let t: u64 = rec[0].parse().map_err(|e| err(format!("t_ns: {e}")))?;
            let mut v = [0.0f64; 8];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = rec[k + 1]
                    .parse()
                    .map_err(|e| err(format!("{}: {e}", TRACE_HEADER[k + 1])))?;
            }
            let pose = Pose::try_from_raw([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
                .map_err(|e| err(e.to_string()))?;
            samples.push(HandSample {
                t_start: Timestamp(t),
                pose,
                fist: v[7],
            });
        }
        Self::from_samples(samples)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRACE_HEADER)?;
        for s in &self.samples {
            let p = s.pose.position;
            let [qw, qx, qy, qz] = s.pose.wxyz();
            w.write_record(&[
                s.t_start.nanos().to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                qw.to_string(),
                qx.to_string(),
                qy.to_string(),
                qz.to_string(),
                s.fist.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parametrized trace generators. Positions are in the XR frame, centred on
/// the origin; `seed` varies phases and waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceSpec {
    /// Lissajous figure in the x-y plane with a gentle wrist roll and
    /// oscillating grip.
    Sinusoid {
        duration: f64,
        period: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Constant-speed segment of `length` meters; direction drawn from `seed`.
    StraightLine {
        duration: f64,
        period: f64,
        length: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Reach, grasp, carry and release between two seeded points.
    PickAndPlace {
        duration: f64,
        period: f64,
        reach: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Holds the origin pose.
    Stationary { duration: f64, period: f64 },
}

impl TraceSpec {
    pub fn period(&self) -> f64 {
        match self {
            TraceSpec::Sinusoid { period, .. }
            | TraceSpec::StraightLine { period, .. }
            | TraceSpec::PickAndPlace { period, .. }
            | TraceSpec::Stationary { period, .. } => *period,
        }
    }

    pub fn generate(&self) -> Result<MotionTrace, TraceError> {
        let (duration, period) = match self {
            TraceSpec::Sinusoid { duration, period, .. }
            | TraceSpec::StraightLine { duration, period, .. }
            | TraceSpec::PickAndPlace { duration, period, .. }
            | TraceSpec::Stationary { duration, period } => (*duration, *period),
        };
        if !(period > 0.0) || !(duration >= 0.0) {
            return Err(TraceError::Parameter("duration >= 0 and period > 0 required".into()));
        }
        let period_ns = secs_to_nanos(period);
        let n = (duration / period).floor() as usize + 1;
        let times = (0..n).map(|i| (i as u64 * period_ns) as f64 * 1e-9);
        let samples: Vec<(Pose, f64)> = match *self {
            TraceSpec::Sinusoid {
                amplitude,
                frequency,
                seed,
                ..
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let phase: f64 = rng.random_range(0.0..2.0 * PI);
                let w = 2.0 * PI * frequency;
                times
                    .map(|t| {
                        let pos = Vector3::new(
                            amplitude * (w * t).sin(),
                            0.5 * amplitude * (2.0 * w * t + phase).sin(),
                            0.25 * amplitude * (w * t + phase).cos(),
                        );
                        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.2 * (w * t).sin());
                        (Pose::new(pos, rot), 0.5 - 0.5 * (w * t).cos())
                    })
                    .collect()
            }
            TraceSpec::StraightLine { length, seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let az: f64 = rng.random_range(0.0..2.0 * PI);
                let el: f64 = rng.random_range(-0.5..0.5);
                let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let total = duration.max(period);
                times
                    .map(|t| (Pose::new(dir * (length * (t / total).min(1.0)), UnitQuaternion::identity()), 0.0))
                    .collect()
            }
            TraceSpec::PickAndPlace { reach, seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let point = |rng: &mut ChaCha8Rng| {
                    Vector3::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach), 0.0)
                };
                let pick = point(&mut rng);
                let place = point(&mut rng);
                let lift = Vector3::new(0.0, 0.0, 0.5 * reach);
                // (time fraction, position, fist)
                let keys = [
                    (0.0, Vector3::zeros(), 0.0),
                    (0.2, pick + lift, 0.0),
                    (0.3, pick, 0.0),
                    (0.4, pick, 1.0),
                    (0.5, pick + lift, 1.0),
                    (0.7, place + lift, 1.0),
                    (0.8, place, 1.0),
                    (0.9, place, 0.0),
                    (1.0, place + lift, 0.0),
                ];
                let total = duration.max(period);
                times
                    .map(|t| {
                        let f = (t / total).clamp(0.0, 1.0);
                        let i = keys.iter().rposition(|k| k.0 <= f).unwrap_or(0).min(keys.len() - 2);
                        let (f0, p0, g0) = keys[i];
                        let (f1, p1, g1) = keys[i + 1];
                        // smoothstep between keyframes
                        let s = ((f - f0) / (f1 - f0)).clamp(0.0, 1.0);
                        let s = s * s * (3.0 - 2.0 * s);
                        (Pose::new(p0.lerp(&p1, s), UnitQuaternion::identity()), g0 + (g1 - g0) * s)
                    })
                    .collect()
            }
            TraceSpec::Stationary { .. } => times.map(|_| (Pose::identity(), 0.0)).collect(),
        };
        MotionTrace::from_poses(Timestamp::ZERO, period_ns, samples)
    }
}
