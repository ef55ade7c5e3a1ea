//! Geometric and temporal value types shared by both sides of the loop.

use std::fmt;
use std::ops::{Add, Sub};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of a quaternion norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("quaternion norm {norm} is not unit (tolerance {UNIT_NORM_TOL})")]
    NonUnitQuaternion { norm: f64 },
    #[error("interpolation parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("non-finite pose component")]
    NonFinite,
}

/// Nanoseconds since the simulation epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_nanos(ns: u64) -> Self {
        Timestamp(ns)
    }

    pub const fn nanos(self) -> u64 {
        self.0
    }

    /// Rounds to the nearest nanosecond; negative inputs saturate at zero.
    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp(secs_to_nanos(s))
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    /// `self - earlier` in seconds, clamped at zero.
    pub fn saturating_secs_since(self, earlier: Timestamp) -> f64 {
        self.0.saturating_sub(earlier.0) as f64 * 1e-9
    }
}

impl Add<u64> for Timestamp {
    type Output = Timestamp;
    fn add(self, ns: u64) -> Timestamp {
        Timestamp(self.0 + ns)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 as i64 - rhs.0 as i64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Converts seconds to whole nanoseconds, rounding to nearest.
pub fn secs_to_nanos(s: f64) -> u64 {
    if s <= 0.0 || !s.is_finite() {
        0
    } else {
        (s * 1e9).round() as u64
    }
}

/// Position in meters plus a unit-quaternion orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Builds a pose from raw `(w, x, y, z)` quaternion components without
    /// renormalizing; rejects quaternions off the unit sphere.
    pub fn try_from_raw(position: [f64; 3], wxyz: [f64; 4]) -> Result<Self, PoseError> {
        if position.iter().chain(wxyz.iter()).any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        check_unit(&q)?;
        Ok(Pose::new(
            Vector3::from(position),
            UnitQuaternion::new_unchecked(q),
        ))
    }

    /// `(w, x, y, z)`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn check_unit(&self) -> Result<(), PoseError> {
        check_unit(self.orientation.quaternion())
    }

    /// Rigid-transform inverse.
    pub fn inverse(&self) -> Pose {
        let rot = self.orientation.inverse();
        Pose::new(-(rot * self.position), rot)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.orientation * other.position + self.position,
            renormalize(self.orientation * other.orientation),
        )
    }
}

fn check_unit(q: &Quaternion<f64>) -> Result<(), PoseError> {
    let norm = q.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL || !norm.is_finite() {
        Err(PoseError::NonUnitQuaternion { norm })
    } else {
        Ok(())
    }
}

/// Pulls a drifted quaternion back onto the unit sphere; leaves values that
/// are already unit to rounding untouched.
pub(crate) fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if (q.coords.norm_squared() - 1.0).abs() <= 1e-14 {
        q
    } else {
        UnitQuaternion::new_normalize(q.into_inner())
    }
}

/// Geodesic angle between two orientations, identifying `q` and `-q`.
pub fn quat_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    // atan2 form stays accurate near zero where acos(|⟨a,b⟩|) does not
    let rel = a.quaternion().conjugate() * b.quaternion();
    2.0 * rel.imag().norm().atan2(rel.w.abs())
}

/// Returns `(position_error, angle_error)` in meters and radians.
pub fn pose_distance(a: &Pose, b: &Pose) -> Result<(f64, f64), PoseError> {
    a.check_unit()?;
    b.check_unit()?;
    Ok((
        (a.position - b.position).norm(),
        quat_angle(&a.orientation, &b.orientation),
    ))
}

/// Shortest-arc spherical interpolation. `s` must already be in `[0, 1]`.
pub(crate) fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    if s == 0.0 {
        return *a;
    }
    if s == 1.0 {
        return *b;
    }
    let qa = a.coords;
    let mut qb = b.coords;
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    let coords = if dot > 1.0 - 1e-12 {
        // nearly parallel: lerp is exact to rounding
        qa * (1.0 - s) + qb * s
    } else {
        let theta = dot.min(1.0).acos();
        let sin_theta = theta.sin();
        qa * (((1.0 - s) * theta).sin() / sin_theta) + qb * ((s * theta).sin() / sin_theta)
    };
    UnitQuaternion::new_normalize(Quaternion::from(coords))
}

/// Linear position / spherical orientation interpolation.
pub fn pose_interpolate(a: &Pose, b: &Pose, s: f64) -> Result<Pose, PoseError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(PoseError::ParameterOutOfRange(s));
    }
    a.check_unit()?;
    b.check_unit()?;
    if s == 0.0 {
        return Ok(*a);
    }
    if s == 1.0 {
        return Ok(*b);
    }
    Ok(Pose::new(
        a.position.lerp(&b.position, s),
        slerp(&a.orientation, &b.orientation, s),
    ))
}

/// Maps a pose in the XR frame into the robot frame through a fixed rigid
/// transform.
pub fn map_xr_to_robot(p: &Pose, transform: &Pose) -> Result<Pose, PoseError> {
    p.check_unit()?;
    transform.check_unit()?;
    Ok(transform.compose(p))
}

/// One hand-tracking output: capture stamp, hand pose and fist score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandSample {
    pub t_start: Timestamp,
    pub pose: Pose,
    pub fist: f64,
}

impl HandSample {
    pub fn new(t_start: Timestamp, pose: Pose, fist: f64) -> Self {
        HandSample {
            t_start,
            pose,
            fist: fist.clamp(0.0, 1.0),
        }
    }
}

/// Robot localization output sent back to the XR side.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSample {
    /// Robot-side capture time of this localization.
    pub captured: Timestamp,
    /// Newest `t_start` in the robot target queue (or last consumed);
    /// `None` before the robot has received any motion.
    pub t_start_echo: Option<Timestamp>,
    pub ee_pose: Pose,
    pub gripper: f64,
    pub cloud: Option<crate::netsim::wire::PointBlock>,
}

/// One displayed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub display_time: Timestamp,
    pub user_pose: Pose,
    /// Robot-frame pose drawn in this frame.
    pub robot_pose_shown: Pose,
    pub gripper_shown: f64,
    pub reconstructed: bool,
    /// `t_start` of the user motion this frame reflects, actual or reconstructed.
    pub source_t_start: Option<Timestamp>,
    /// Echo carried by the newest feedback actually received before the frame.
    pub feedback_t_start: Option<Timestamp>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn rot_z(angle: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
    }

    #[test]
    fn distance_examples() {
        let p = Pose::from_translation(0.3, -0.2, 0.1);
        assert_eq!(pose_distance(&p, &p).unwrap(), (0.0, 0.0));

        let a = Pose::identity();
        let b = Pose::from_translation(3.0, 4.0, 0.0);
        assert_eq!(pose_distance(&a, &b).unwrap(), (5.0, 0.0));

        let c = Pose::new(Vector3::zeros(), rot_z(FRAC_PI_2));
        let (_, ang) = pose_distance(&a, &c).unwrap();
        assert_relative_eq!(ang, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn distance_identifies_antipodal_quaternions() {
        let q = rot_z(0.7);
        let neg = UnitQuaternion::new_unchecked(-q.into_inner());
        let a = Pose::new(Vector3::zeros(), q);
        let b = Pose::new(Vector3::zeros(), neg);
        assert!(pose_distance(&a, &b).unwrap().1 < 1e-7);
    }

    #[test]
    fn non_unit_rejected() {
        let bad = Pose::new(
            Vector3::zeros(),
            UnitQuaternion::new_unchecked(Quaternion::new(1.1, 0.0, 0.0, 0.0)),
        );
        assert!(matches!(
            pose_distance(&bad, &Pose::identity()),
            Err(PoseError::NonUnitQuaternion { .. })
        ));
        assert!(Pose::try_from_raw([0.0; 3], [0.5, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn interpolate_examples() {
        let a = Pose::from_translation(1.0, 0.0, 0.0);
        let b = Pose::new(Vector3::new(0.0, 2.0, 0.0), rot_z(FRAC_PI_2));
        assert_eq!(pose_interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(pose_interpolate(&a, &b, 1.0).unwrap(), b);
        for s in [0.1, 0.5, 0.9] {
            assert_eq!(pose_interpolate(&a, &a, s).unwrap().position, a.position);
            assert!(quat_angle(&pose_interpolate(&a, &a, s).unwrap().orientation, &a.orientation) < 1e-12);
        }
        let mid = pose_interpolate(&Pose::identity(), &Pose::new(Vector3::zeros(), rot_z(FRAC_PI_2)), 0.5)
            .unwrap();
        assert!(quat_angle(&mid.orientation, &rot_z(FRAC_PI_4)) < 1e-12);
        assert!(pose_interpolate(&a, &b, 1.5).is_err());
        assert!(pose_interpolate(&a, &b, -0.1).is_err());
    }

    #[test]
    fn slerp_takes_short_arc() {
        let a = rot_z(0.1);
        let b = UnitQuaternion::new_unchecked(-rot_z(0.3).into_inner());
        let mid = slerp(&a, &b, 0.5);
        assert!(quat_angle(&mid, &rot_z(0.2)) < 1e-12);
    }

    #[test]
    fn map_examples() {
        let p = Pose::new(Vector3::new(1.0, 0.0, 0.0), rot_z(0.3));
        assert_eq!(map_xr_to_robot(&p, &Pose::identity()).unwrap(), p);

        let shifted = map_xr_to_robot(&p, &Pose::from_translation(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(shifted.position, Vector3::new(2.0, 0.0, 0.0));
        assert!(quat_angle(&shifted.orientation, &p.orientation) < 1e-12);

        let rotated = map_xr_to_robot(
            &Pose::from_translation(1.0, 0.0, 0.0),
            &Pose::new(Vector3::zeros(), rot_z(FRAC_PI_2)),
        )
        .unwrap();
        assert_relative_eq!(rotated.position, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn timestamp_conversions() {
        assert_eq!(Timestamp::from_secs_f64(0.99).nanos(), 990_000_000);
        assert_eq!(Timestamp::from_secs_f64(-1.0), Timestamp::ZERO);
        assert_eq!(Timestamp(5).saturating_secs_since(Timestamp(9)), 0.0);
    }
}
