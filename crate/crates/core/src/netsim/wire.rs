//! Fixed-layout little-endian message format.
//!
//! ```text
//! common header (73 bytes)
//!   tag        u8     1 = USER_MOTION, 2 = ROBOT_FEEDBACK
//!   t_start    u64    ns
//!   pose       7×f64  x, y, z, qw, qx, qy, qz
//!   scalar     f64    fist (USER_MOTION) or gripper (ROBOT_FEEDBACK)
//! ROBOT_FEEDBACK continues (9 bytes)
//!   t_echo     u64    ns
//!   cloud_flag u8     0 or 1
//! point block, present iff cloud_flag = 1 (8 + 16·N bytes)
//!   width      u16
//!   height     u16
//!   count      u32
//!   count × { x f32, y f32, z f32, r u8, g u8, b u8, a u8 }
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{FeedbackSample, HandSample, Pose, Timestamp};

pub const TAG_USER_MOTION: u8 = 1;
pub const TAG_ROBOT_FEEDBACK: u8 = 2;
pub const USER_MOTION_LEN: usize = 1 + 8 + 7 * 8 + 8;
pub const FEEDBACK_BASE_LEN: usize = USER_MOTION_LEN + 8 + 1;
pub const POINT_BLOCK_HEADER_LEN: usize = 2 + 2 + 4;
pub const POINT_RECORD_LEN: usize = 16;
/// Echo value meaning "no user motion received yet".
pub const ECHO_NONE: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown tag {tag} at byte {offset}")]
    UnknownTag { offset: usize, tag: u8 },
    #[error("invalid cloud flag {flag} at byte {offset}")]
    BadFlag { offset: usize, flag: u8 },
    #[error("invalid value at byte {offset}: {reason}")]
    InvalidValue { offset: usize, reason: String },
    #[error("{extra} trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

impl WireError {
    pub fn offset(&self) -> usize {
        match self {
            WireError::Truncated { offset, .. }
            | WireError::UnknownTag { offset, .. }
            | WireError::BadFlag { offset, .. }
            | WireError::InvalidValue { offset, .. }
            | WireError::TrailingBytes { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub rgba: [u8; 4],
}

/// Point records of an organized cloud as carried on the wire.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointBlock {
    pub width: u16,
    pub height: u16,
    pub points: Vec<CloudPoint>,
}

impl PointBlock {
    pub fn encoded_len(&self) -> usize {
        POINT_BLOCK_HEADER_LEN + POINT_RECORD_LEN * self.points.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&(self.points.len() as u32).to_le_bytes());
        for p in &self.points {
            out.extend_from_slice(&p.x.to_le_bytes());
            out.extend_from_slice(&p.y.to_le_bytes());
            out.extend_from_slice(&p.z.to_le_bytes());
            out.extend_from_slice(&p.rgba);
        }
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let width = r.u16()?;
        let height = r.u16()?;
        let count_at = r.offset();
        let count = r.u32()? as usize;
        if count > width as usize * height as usize {
            return Err(WireError::InvalidValue {
                offset: count_at,
                reason: format!("point count {count} exceeds {width}x{height}"),
            });
        }
        r.require(count * POINT_RECORD_LEN)?;
        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            points.push(CloudPoint {
                x: r.f32()?,
                y: r.f32()?,
                z: r.f32()?,
                rgba: [r.u8()?, r.u8()?, r.u8()?, r.u8()?],
            });
        }
        Ok(PointBlock {
            width,
            height,
            points,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    UserMotion(HandSample),
    RobotFeedback(FeedbackSample),
}

impl WireMessage {
    pub fn encoded_len(&self) -> usize {
        match self {
            WireMessage::UserMotion(_) => USER_MOTION_LEN,
            WireMessage::RobotFeedback(fb) => {
                FEEDBACK_BASE_LEN + fb.cloud.as_ref().map_or(0, PointBlock::encoded_len)
            }
        }
    }
}

fn write_header(out: &mut Vec<u8>, tag: u8, t: Timestamp, pose: &Pose, scalar: f64) {
    out.push(tag);
    out.extend_from_slice(&t.nanos().to_le_bytes());
    for v in pose.position.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in pose.wxyz() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&scalar.to_le_bytes());
}

pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    match msg {
        WireMessage::UserMotion(h) => {
            write_header(&mut out, TAG_USER_MOTION, h.t_start, &h.pose, h.fist);
        }
        WireMessage::RobotFeedback(fb) => {
            write_header(&mut out, TAG_ROBOT_FEEDBACK, fb.captured, &fb.ee_pose, fb.gripper);
            out.extend_from_slice(&fb.t_start_echo.map_or(ECHO_NONE, Timestamp::nanos).to_le_bytes());
            match &fb.cloud {
                None => out.push(0),
                Some(block) => {
                    out.push(1);
                    block.write_to(&mut out);
                }
            }
        }
    }
    out
}

/// Bounds-checked little-endian cursor.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn require(&self, n: usize) -> Result<(), WireError> {
        if self.remaining() < n {
            Err(WireError::Truncated {
                offset: self.pos,
                needed: n - self.remaining(),
            })
        } else {
            Ok(())
        }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        self.require(N)?;
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        Ok(a)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }
    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    pub fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take()?))
    }
    pub fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<(Timestamp, Pose, f64), WireError> {
    let t = Timestamp(r.u64()?);
    let pose_at = r.offset();
    let mut v = [0.0; 7];
    for slot in v.iter_mut() {
        *slot = r.f64()?;
    }
    let pose = Pose::try_from_raw([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]).map_err(|e| {
        WireError::InvalidValue {
            offset: pose_at,
            reason: e.to_string(),
        }
    })?;
    let scalar_at = r.offset();
    let scalar = r.f64()?;
    if !(0.0..=1.0).contains(&scalar) {
        return Err(WireError::InvalidValue {
            offset: scalar_at,
            reason: format!("intensity {scalar} outside [0, 1]"),
        });
    }
    Ok((t, pose, scalar))
}

pub fn decode(buf: &[u8]) -> Result<WireMessage, WireError> {
    let mut r = Reader::new(buf);
    let tag = r.u8()?;
    let msg = match tag {
        TAG_USER_MOTION => {
            let (t_start, pose, fist) = read_header(&mut r)?;
            WireMessage::UserMotion(HandSample { t_start, pose, fist })
        }
        TAG_ROBOT_FEEDBACK => {
            let (captured, ee_pose, gripper) = read_header(&mut r)?;
            let raw = r.u64()?;
            let t_start_echo = (raw != ECHO_NONE).then_some(Timestamp(raw));
            let flag_at = r.offset();
            let cloud = match r.u8()? {
                0 => None,
                1 => Some(PointBlock::read_from(&mut r)?),
                flag => return Err(WireError::BadFlag { offset: flag_at, flag }),
            };
            WireMessage::RobotFeedback(FeedbackSample {
                captured,
                t_start_echo,
                ee_pose,
                gripper,
                cloud,
            })
        }
        tag => return Err(WireError::UnknownTag { offset: 0, tag }),
    };
    if r.remaining() > 0 {
        return Err(WireError::TrailingBytes {
            offset: r.offset(),
            extra: r.remaining(),
        });
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_motion_layout() {
        let msg = WireMessage::UserMotion(HandSample::new(Timestamp(0), Pose::identity(), 0.0));
        let bytes = encode(&msg);
        assert_eq!(bytes.len(), 73);
        assert_eq!(bytes[0], TAG_USER_MOTION);
        assert!(bytes[1..33].iter().all(|&b| b == 0));
        // qw = 1.0
        assert_eq!(&bytes[33..41], &1.0f64.to_le_bytes());
        assert!(bytes[41..].iter().all(|&b| b == 0));
        assert_eq!(decode(&bytes).unwrap(), msg);
    }

    fn feedback(points: usize) -> FeedbackSample {
        FeedbackSample {
            captured: Timestamp(42),
            t_start_echo: Some(Timestamp(40)),
            ee_pose: Pose::from_translation(0.1, 0.2, 0.3),
            gripper: 0.5,
            cloud: (points > 0).then(|| PointBlock {
                width: 100,
                height: 100,
                points: vec![
                    CloudPoint {
                        x: 1.0,
                        y: 2.0,
                        z: 3.0,
                        rgba: [1, 2, 3, 4]
                    };
                    points
                ],
            }),
        }
    }

    #[test]
    fn feedback_sizes() {
        assert_eq!(encode(&WireMessage::RobotFeedback(feedback(0))).len(), 82);
        let with_cloud = encode(&WireMessage::RobotFeedback(feedback(10_000)));
        assert_eq!(with_cloud.len(), 82 + 8 + 160_000);
        assert_eq!(
            decode(&with_cloud).unwrap(),
            WireMessage::RobotFeedback(feedback(10_000))
        );
    }

    #[test]
    fn truncated_reports_offset() {
        let bytes = encode(&WireMessage::RobotFeedback(feedback(3)));
        for cut in [0, 1, 40, 81, 85, bytes.len() - 1] {
            let err = decode(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, WireError::Truncated { .. }), "cut {cut}: {err:?}");
            assert!(err.offset() <= cut);
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(decode(&[9]), Err(WireError::UnknownTag { tag: 9, .. })));
        let mut bytes = encode(&WireMessage::RobotFeedback(feedback(0)));
        bytes[81] = 7;
        assert!(matches!(decode(&bytes), Err(WireError::BadFlag { offset: 81, flag: 7 })));
        let mut bytes = encode(&WireMessage::UserMotion(HandSample::new(Timestamp(1), Pose::identity(), 0.2)));
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(WireError::TrailingBytes { offset: 73, extra: 1 })));
        // qw = 2
        let mut bytes = encode(&WireMessage::UserMotion(HandSample::new(Timestamp(1), Pose::identity(), 0.2)));
        bytes[33..41].copy_from_slice(&2.0f64.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(WireError::InvalidValue { offset: 9, .. })));
    }
}
