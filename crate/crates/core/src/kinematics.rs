//! Serial-arm kinematics from a Denavit-Hartenberg table: forward
//! kinematics, geometric Jacobian and a damped-least-squares IK solver.

use std::path::Path;

use nalgebra::{
    DMatrix, DVector, Dyn, Isometry3, OMatrix, Translation3, UnitQuaternion, Vector3, Vector6, U6,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{quat_angle, renormalize, Pose};

/// Bundled default arm table.
pub const DEFAULT_ARM_TABLE: &str = include_str!("../data/arm_7dof.dh");

/// Tolerance when checking a configuration against its joint limits.
const LIMIT_SLACK: f64 = 1e-12;

pub type Jacobian = OMatrix<f64, U6, Dyn>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint} = {value} outside limits [{min}, {max}]")]
    OutOfLimits {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("expected {expected} joint values, got {got}")]
    DofMismatch { expected: usize, got: usize },
    #[error("target unreachable after {iterations} iterations (residual {position_residual} m, {angle_residual} rad)")]
    Unreachable {
        best: JointConfig,
        iterations: usize,
        position_residual: f64,
        angle_residual: f64,
    },
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("D-H table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
    #[error("reading D-H table: {0}")]
    Io(String),
}

/// One row of a standard D-H table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DHRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DHRow {
    pub fn new(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Self {
        DHRow {
            a,
            alpha,
            d,
            theta_offset,
        }
    }

    /// `Rz(θ) Tz(d) Tx(a) Rx(α)`.
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let theta = q + self.theta_offset;
        let (st, ct) = theta.sin_cos();
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(
            Translation3::new(self.a * ct, self.a * st, self.d),
            rz * rx,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn zeros(n: usize) -> Self {
        JointConfig(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    rows: Vec<DHRow>,
    limits: Vec<(f64, f64)>,
}

impl ArmModel {
    pub fn new(rows: Vec<DHRow>, limits: Vec<(f64, f64)>) -> Result<Self, KinematicsError> {
        if rows.is_empty() {
            return Err(KinematicsError::InvalidModel("no joints".into()));
        }
        if rows.len() != limits.len() {
            return Err(KinematicsError::InvalidModel(format!(
                "{} rows but {} limit pairs",
                rows.len(),
                limits.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if ![r.a, r.alpha, r.d, r.theta_offset].iter().all(|v| v.is_finite()) {
                return Err(KinematicsError::InvalidModel(format!("row {i} not finite")));
            }
        }
        for (i, (lo, hi)) in limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {i}: min {lo} not below max {hi}"
                )));
            }
        }
        Ok(ArmModel { rows, limits })
    }

    /// Model with every joint limited to `[-π, π]`.
    pub fn unlimited(rows: Vec<DHRow>) -> Result<Self, KinematicsError> {
        let n = rows.len();
        Self::new(rows, vec![(-std::f64::consts::PI, std::f64::consts::PI); n])
    }

    pub fn default_7dof() -> Self {
        Self::parse_table(DEFAULT_ARM_TABLE).expect("bundled D-H table is valid")
    }

    pub fn dof(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[DHRow] {
        &self.rows
    }

    pub fn limits(&self) -> &[(f64, f64)] {
        &self.limits
    }

    /// Parses the plain-text table format: one joint per line with columns
    /// `a alpha d theta_offset min max`; `#` starts a comment.
    pub fn parse_table(text: &str) -> Result<Self, KinematicsError> {
        let mut rows = Vec::new();
        let mut limits = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>().map_err(|e| KinematicsError::Parse {
                        line: idx + 1,
                        message: format!("{s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != 6 {
                return Err(KinematicsError::Parse {
                    line: idx + 1,
                    message: format!("expected 6 columns, found {}", vals.len()),
                });
            }
            rows.push(DHRow::new(vals[0], vals[1], vals[2], vals[3]));
            limits.push((vals[4], vals[5]));
        }
        Self::new(rows, limits)
    }

    pub fn load(path: &Path) -> Result<Self, KinematicsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KinematicsError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_table(&text)
    }

    pub fn check(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DofMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        for (joint, (&value, &(min, max))) in q.0.iter().zip(&self.limits).enumerate() {
            if !(value >= min - LIMIT_SLACK && value <= max + LIMIT_SLACK) {
                return Err(KinematicsError::OutOfLimits {
                    joint,
                    value,
                    min,
                    max,
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut JointConfig) {
        for (v, &(lo, hi)) in q.0.iter_mut().zip(&self.limits) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Midpoint of every joint range.
    pub fn mid_config(&self) -> JointConfig {
        JointConfig(self.limits.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect())
    }

    /// Base-frame transforms of frames `0..=n` (frame 0 is the base).
    fn frames(&self, q: &JointConfig) -> Vec<Isometry3<f64>> {
        let mut out = Vec::with_capacity(self.dof() + 1);
        let mut acc = Isometry3::identity();
        out.push(acc);
        for (row, &qi) in self.rows.iter().zip(&q.0) {
            acc *= row.transform(qi);
            out.push(acc);
        }
        out
    }
}

fn iso_to_pose(iso: &Isometry3<f64>) -> Pose {
    Pose::new(iso.translation.vector, renormalize(iso.rotation))
}

pub fn forward_kinematics(model: &ArmModel, q: &JointConfig) -> Result<Pose, KinematicsError> {
    model.check(q)?;
    Ok(iso_to_pose(model.frames(q).last().expect("at least one frame")))
}

/// Geometric Jacobian `[linear; angular]` of the end-effector in the base frame.
pub fn jacobian(model: &ArmModel, q: &JointConfig) -> Result<Jacobian, KinematicsError> {
    model.check(q)?;
    Ok(jacobian_unchecked(model, q))
}

fn jacobian_unchecked(model: &ArmModel, q: &JointConfig) -> Jacobian {
    let frames = model.frames(q);
    let tip = frames[model.dof()].translation.vector;
    let mut jac = Jacobian::zeros(model.dof());
    for (i, f) in frames[..model.dof()].iter().enumerate() {
        let z = f.rotation * Vector3::z();
        let o = f.translation.vector;
        let lin = z.cross(&(tip - o));
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    jac
}

/// Twist error `[Δp; axis·angle]` taking `current` to `target`.
fn pose_error(target: &Pose, current: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = (target.orientation * current.orientation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkConfig {
    /// Convergence tolerance, applied to both meters and radians.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping λ.
    pub damping: f64,
    /// Largest joint-space step norm per iteration (radians).
    pub max_step: f64,
    /// Ignore orientation (for arms with fewer than six joints).
    pub position_only: bool,
    /// Extra attempts from fixed, spread-out seeds when the first attempt
    /// stalls in a local minimum.
    pub restarts: usize,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig {
            tol: 1e-6,
            max_iter: 200,
            damping: 0.05,
            max_step: 0.5,
            position_only: false,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub iterations: usize,
    pub position_error: f64,
    pub angle_error: f64,
}

/// Full-pose damped-least-squares IK with default damping.
pub fn inverse_kinematics(
    model: &ArmModel,
    seed: &JointConfig,
    target: &Pose,
    tol: f64,
    max_iter: usize,
) -> Result<IkSolution, KinematicsError> {
    solve_ik(
        model,
        seed,
        target,
        &IkConfig {
            tol,
            max_iter,
            ..IkConfig::default()
        },
    )
}

/// Levenberg-style damped least squares: `Δq = Jᵀ(JJᵀ + λ²I)⁻¹e`, joints
/// clamped to their limits after every step. λ grows when a step fails to
/// reduce the residual and shrinks back toward its initial value otherwise.
pub fn solve_ik(
    model: &ArmModel,
    seed: &JointConfig,
    target: &Pose,
    cfg: &IkConfig,
) -> Result<IkSolution, KinematicsError> {
    let first = solve_from(model, seed, target, cfg);
    let Err(KinematicsError::Unreachable { .. }) = first else {
        return first;
    };
    let mut best = first;
    for k in 1..=cfg.restarts {
        let attempt = solve_from(model, &restart_seed(model, k), target, cfg);
        match attempt {
            Ok(sol) => return Ok(sol),
            Err(KinematicsError::Unreachable {
                position_residual, angle_residual, ..
            }) => {
                if let Err(KinematicsError::Unreachable {
                    position_residual: bp,
                    angle_residual: ba,
                    ..
                }) = &best
                {
                    if position_residual + angle_residual < bp + ba {
                        best = attempt;
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    best
}

/// Deterministic low-discrepancy configuration inside the joint limits.
fn restart_seed(model: &ArmModel, k: usize) -> JointConfig {
    const PRIMES: [usize; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];
    let radical_inverse = |mut i: usize, base: usize| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    JointConfig(
        model
            .limits()
            .iter()
            .enumerate()
            .map(|(j, (lo, hi))| {
                // keep away from the limits themselves
                let u = 0.1 + 0.8 * radical_inverse(k, PRIMES[j % PRIMES.len()]);
                lo + u * (hi - lo)
            })
            .collect(),
    )
}

fn solve_from(
    model: &ArmModel,
    seed: &JointConfig,
    target: &Pose,
    cfg: &IkConfig,
) -> Result<IkSolution, KinematicsError> {
    if !(cfg.tol > 0.0) {
        return Err(KinematicsError::InvalidParameter("tol must be > 0"));
    }
    if !(cfg.damping > 0.0) {
        return Err(KinematicsError::InvalidParameter("damping must be > 0"));
    }
    if !target.position.iter().all(|v| v.is_finite()) {
        return Err(KinematicsError::InvalidParameter("target not finite"));
    }
    if seed.len() != model.dof() {
        return Err(KinematicsError::DofMismatch {
            expected: model.dof(),
            got: seed.len(),
        });
    }
    let mut q = seed.clone();
    model.clamp(&mut q);

    let residual = |q: &JointConfig| {
        let pose = iso_to_pose(model.frames(q).last().expect("frame"));
        let mut e = pose_error(target, &pose);
        let pos = e.fixed_rows::<3>(0).norm();
        let ang = quat_angle(&target.orientation, &pose.orientation);
        if cfg.position_only {
            e.fixed_rows_mut::<3>(3).fill(0.0);
        }
        (e, pos, ang)
    };
    let converged = |pos: f64, ang: f64| pos <= cfg.tol && (cfg.position_only || ang <= cfg.tol);

    let (mut err, mut pos, mut ang) = residual(&q);
    let mut lambda = cfg.damping;
    for iter in 0..cfg.max_iter {
        if converged(pos, ang) {
            return Ok(IkSolution {
                q,
                iterations: iter,
                position_error: pos,
                angle_error: ang,
            });
        }
        let full = jacobian_unchecked(model, &q);
        let rows = if cfg.position_only { 3 } else { 6 };
        let jac = full.rows(0, rows).into_owned();
        let e = DVector::from_iterator(rows, err.iter().take(rows).copied());
        let damped = &jac * jac.transpose() + DMatrix::identity(rows, rows) * (lambda * lambda);
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let mut dq: DVector<f64> = jac.transpose() * chol.solve(&e);
        let step = dq.norm();
        if step > cfg.max_step {
            dq *= cfg.max_step / step;
        }
        let mut trial = JointConfig(q.0.iter().zip(dq.iter()).map(|(a, b)| a + b).collect());
        model.clamp(&mut trial);
        let (t_err, t_pos, t_ang) = residual(&trial);
        if t_err.norm() < err.norm() {
            q = trial;
            err = t_err;
            pos = t_pos;
            ang = t_ang;
            lambda = (lambda * 0.5).max(cfg.damping * 1e-3);
        } else {
            lambda *= 4.0;
            if lambda > 1e6 {
                break;
            }
        }
    }
    if converged(pos, ang) {
        return Ok(IkSolution {
            q,
            iterations: cfg.max_iter,
            position_error: pos,
            angle_error: ang,
        });
    }
    Err(KinematicsError::Unreachable {
        best: q,
        iterations: cfg.max_iter,
        position_residual: pos,
        angle_residual: ang,
    })
}
