//! Simulation configuration: TOML schema, validation and resolution into the
//! concrete objects a run needs.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{MotionTrace, PlannerConfig, TraceSpec};
use crate::feedback::EkfConfig;
use crate::kinematics::{forward_kinematics, solve_ik, ArmModel, IkConfig, JointConfig};
use crate::netsim::presets::{preset, PRESET_NAMES};
use crate::netsim::wire::PointBlock;
use crate::netsim::{ChannelConfig, Jitter};
use crate::pointcloud::canny::CannyParams;
use crate::pointcloud::scene::{render, SceneConfig, SceneSpec};
use crate::pointcloud::{n_max, scale_to_budget, ScalingConfig};
use crate::pose::{secs_to_nanos, Pose};
use crate::scheduler::{
    min_period_bound, BoundMode, Duration, Functionality, Pipeline, DEFAULT_PROFILE_SAMPLES,
};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Telexr,
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Telexr => "telexr",
            Mode::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "telexr" => Ok(Mode::Telexr),
            "baseline" => Ok(Mode::Baseline),
            _ => Err(format!("unknown mode {s:?} (expected telexr or baseline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    Simulated,
    Datagram,
}

/// Periods in seconds. `hand` defaults to the trace's own period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Periods {
    pub hand: Option<f64>,
    pub control: f64,
    pub encoder: f64,
    pub talker: f64,
    pub camera: f64,
    pub frame: f64,
}

impl Default for Periods {
    fn default() -> Self {
        Periods {
            hand: None,
            control: 0.005,
            encoder: 0.02,
            talker: 0.04,
            camera: 0.2,
            frame: 0.02,
        }
    }
}

/// One channel direction: either a named preset with optional overrides, or
/// explicit fields over an ideal link.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub preset: Option<String>,
    pub base_latency: Option<f64>,
    pub jitter: Option<Jitter>,
    pub drop_prob: Option<f64>,
    pub bandwidth: Option<f64>,
    pub gate_period: Option<f64>,
    pub forced_drops: Vec<u64>,
}

impl LinkConfig {
    pub fn resolve(&self, seed: u64) -> Result<ChannelConfig, String> {
        let mut c = match &self.preset {
            Some(name) => preset(name, seed, None)
                .ok_or_else(|| format!("unknown preset {name:?}, expected one of {PRESET_NAMES:?}"))?,
            None => ChannelConfig {
                seed,
                ..ChannelConfig::ideal()
            },
        };
        if let Some(v) = self.base_latency {
            c.base_latency = v;
        }
        if let Some(j) = &self.jitter {
            c.jitter = j.clone();
        }
        if let Some(v) = self.drop_prob {
            c.drop_prob = v;
        }
        if let Some(v) = self.bandwidth {
            c.bandwidth = v;
        }
        c.gate_period = self.gate_period;
        c.forced_drops = self.forced_drops.clone();
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudSection {
    pub enabled: bool,
    /// Apply edge-preserving scaling before transmission.
    pub scaling: bool,
    /// Share of the downlink bandwidth budgeted for the cloud.
    pub bandwidth_fraction: f64,
    pub point_size: usize,
    pub canny: CannyParams,
    pub scene: SceneConfig,
}

impl Default for CloudSection {
    fn default() -> Self {
        CloudSection {
            enabled: true,
            scaling: true,
            bandwidth_fraction: 0.9,
            point_size: crate::netsim::wire::POINT_RECORD_LEN,
            canny: CannyParams::default(),
            scene: SceneConfig {
                width: 80,
                height: 60,
                scene: SceneSpec::CubeOnPlane {
                    plane_depth: 1.5,
                    size: 0.3,
                },
                seed: 0,
                noise: 0.0,
                dropout: 0.0,
            },
        }
    }
}

/// One XR rendering stage. `period` defaults to the frame period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub id: String,
    pub duration: Duration,
    #[serde(default)]
    pub gpu_bound: bool,
    #[serde(default)]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XrSection {
    pub bound: BoundMode,
    pub profile_samples: usize,
    pub stages: Vec<StageConfig>,
}

impl Default for XrSection {
    fn default() -> Self {
        let stage = |id: &str, ms: f64, gpu| StageConfig {
            id: id.into(),
            duration: Duration::Constant { value: ms / 1000.0 },
            gpu_bound: gpu,
            period: None,
        };
        XrSection {
            bound: BoundMode::ExcludeLast,
            profile_samples: DEFAULT_PROFILE_SAMPLES,
            stages: vec![stage("listener", 2.0, false), stage("render", 6.0, true), stage("reproject", 2.0, true)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    pub wxyz: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmSection {
    /// D-H table file; the built-in 7-DOF arm when absent.
    pub model: Option<PathBuf>,
    pub home: Vec<f64>,
    /// XR→robot transform; defaults to the home end-effector pose.
    pub transform: Option<PoseSpec>,
    pub ik: IkConfig,
}

impl Default for ArmSection {
    fn default() -> Self {
        ArmSection {
            model: None,
            home: vec![0.0, 0.5, 0.0, -1.2, 0.0, 0.8, 0.0],
            transform: None,
            ik: IkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub path: Option<PathBuf>,
    pub generator: Option<TraceSpec>,
}

impl TraceSection {
    /// Used when neither a path nor a generator is configured.
    pub fn default_generator() -> TraceSpec {
        TraceSpec::Sinusoid {
            duration: 5.0,
            period: 0.02,
            amplitude: 0.05,
            frequency: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    /// Entries the queue must hold before motion starts.
    pub start_buffer: usize,
    pub initial_gripper: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        RobotSection {
            start_buffer: 2,
            initial_gripper: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveSection {
    pub xr_addr: String,
    pub robot_addr: String,
}

impl Default for LiveSection {
    fn default() -> Self {
        LiveSection {
            xr_addr: "127.0.0.1:47801".into(),
            robot_addr: "127.0.0.1:47802".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub version: u32,
    pub mode: Mode,
    pub transport: Transport,
    /// Seconds of simulated time.
    pub horizon: f64,
    pub seed: u64,
    pub periods: Periods,
    pub uplink: LinkConfig,
    pub downlink: LinkConfig,
    pub planner: PlannerConfig,
    pub ekf: EkfConfig,
    pub cloud: CloudSection,
    pub xr: XrSection,
    pub arm: ArmSection,
    pub trace: TraceSection,
    pub robot: RobotSection,
    pub live: LiveSection,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            version: CONFIG_VERSION,
            mode: Mode::Telexr,
            transport: Transport::Simulated,
            horizon: 6.0,
            seed: 0,
            periods: Periods::default(),
            uplink: LinkConfig::default(),
            downlink: LinkConfig::default(),
            planner: PlannerConfig::default(),
            ekf: EkfConfig::default(),
            cloud: CloudSection::default(),
            xr: XrSection::default(),
            arm: ArmSection::default(),
            trace: TraceSection::default(),
            robot: RobotSection::default(),
            live: LiveSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration")?;
        for d in &self.diagnostics {
            write!(f, "\n  {}: {}", d.field, d.message)?;
        }
        Ok(())
    }
}

impl ConfigError {
    fn single(field: &str, message: impl Into<String>) -> Self {
        ConfigError {
            diagnostics: vec![Diagnostic {
                field: field.into(),
                message: message.into(),
            }],
        }
    }
}

#[derive(Default)]
struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    fn push(&mut self, field: impl Into<String>, message: impl fmt::Display) {
        self.0.push(Diagnostic {
            field: field.into(),
            message: message.to_string(),
        });
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(field, format!("must be > 0, got {v}"));
        }
    }
}

/// Everything a run needs, derived once from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: SimConfig,
    pub uplink: ChannelConfig,
    pub downlink: ChannelConfig,
    pub planner: PlannerConfig,
    pub trace: MotionTrace,
    pub arm: ArmModel,
    pub home: JointConfig,
    pub transform: Pose,
    pub pipeline: Pipeline,
    pub bound: f64,
    pub cloud: Option<CloudPlan>,
}

#[derive(Debug, Clone)]
pub struct CloudPlan {
    pub block: PointBlock,
    pub raw_points: usize,
    pub n_max: usize,
    pub r: f64,
}

/// SplitMix64 step, for deriving independent sub-seeds from the master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("toml@{}..{}", s.start, s.end))
                .unwrap_or_else(|| "toml".into());
            ConfigError::single(&field, e.message())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single("file", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths are taken from the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [cfg.arm.model.as_mut(), cfg.trace.path.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Validates every section and builds the run inputs. All problems are
    /// collected before returning.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let mut d = Diagnostics::default();
        if self.version != CONFIG_VERSION {
            d.push("version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version));
        }
        d.positive("horizon", self.horizon);
        let p = &self.periods;
        for (name, v) in [
            ("periods.control", p.control),
            ("periods.encoder", p.encoder),
            ("periods.talker", p.talker),
            ("periods.camera", p.camera),
            ("periods.frame", p.frame),
        ] {
            d.positive(name, v);
            if v > 0.0 && v.is_finite() && secs_to_nanos(v) == 0 {
                d.push(name, "shorter than one nanosecond");
            }
        }
        if let Some(h) = p.hand {
            d.positive("periods.hand", h);
        }

        let uplink = self.uplink.resolve(derive_seed(self.seed, 1));
        let downlink = self.downlink.resolve(derive_seed(self.seed, 2));
        if let Err(m) = &uplink {
            d.push("uplink", m);
        }
        if let Err(m) = &downlink {
            d.push("downlink", m);
        }

        let mut planner = self.planner.clone();
        planner.t_c = p.control;
        if let Err(e) = planner.validate() {
            d.push("planner", e);
        }
        if let Err(e) = self.ekf.validate() {
            d.push("ekf", e);
        }
        if !(0.0..=1.0).contains(&self.robot.initial_gripper) {
            d.push("robot.initial_gripper", "must be in [0, 1]");
        }

        let trace = match (&self.trace.path, &self.trace.generator) {
            (Some(path), None) => MotionTrace::load(path).map_err(|e| e.to_string()),
            (None, Some(spec)) => spec.generate().map_err(|e| e.to_string()),
            (Some(_), Some(_)) => Err("set either path or generator, not both".into()),
            (None, None) => TraceSection::default_generator().generate().map_err(|e| e.to_string()),
        };
        let trace = match trace {
            Ok(t) => {
                if let Some(h) = p.hand {
                    if secs_to_nanos(h) != t.period_ns() {
                        d.push(
                            "periods.hand",
                            format!("{h} s does not match the trace period {} s", t.period_ns() as f64 * 1e-9),
                        );
                    }
                }
                Some(t)
            }
            Err(m) => {
                d.push("trace", m);
                None
            }
        };

        let arm = match &self.arm.model {
            Some(path) => ArmModel::load(path).map_err(|e| d.push("arm.model", e)).ok(),
            None => Some(ArmModel::default_7dof()),
        };
        let home = JointConfig(self.arm.home.clone());
        let mut transform = None;
        if let Some(arm) = &arm {
            match arm.check(&home) {
                Err(e) => d.push("arm.home", e),
                Ok(()) => {
                    transform = match &self.arm.transform {
                        Some(ps) => Pose::try_from_raw(ps.position, ps.wxyz)
                            .map_err(|e| d.push("arm.transform", e))
                            .ok(),
                        None => forward_kinematics(arm, &home).map_err(|e| d.push("arm.home", e)).ok(),
                    };
                }
            }
        }

        let (pipeline, bound) = self.resolve_pipeline(&mut d);

        let cloud = match &downlink {
            Ok(down) if self.cloud.enabled => self.resolve_cloud(down, &mut d),
            _ => None,
        };

        if !d.0.is_empty() {
            return Err(ConfigError { diagnostics: d.0 });
        }
        let (Some(trace), Some(arm), Some(transform), Some(pipeline)) = (trace, arm, transform, pipeline) else {
            unreachable!("every missing piece records a diagnostic");
        };
        Ok(Resolved {
            config: self.clone(),
            uplink: uplink.expect("checked"),
            downlink: downlink.expect("checked"),
            planner,
            trace,
            arm,
            home,
            transform,
            pipeline,
            bound: bound.unwrap_or(0.0),
            cloud,
        })
    }

    fn resolve_pipeline(&self, d: &mut Diagnostics) -> (Option<Pipeline>, Option<f64>) {
        let frame = self.periods.frame;
        if self.xr.stages.is_empty() {
            d.push("xr.stages", "needs at least one stage");
            return (None, None);
        }
        let stages: Vec<Functionality> = self
            .xr
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| Functionality {
                id: s.id.clone(),
                // the first stage always runs at the frame rate
                period: if i == 0 { frame } else { s.period.unwrap_or(frame) },
                duration: s.duration.clone(),
                gpu_bound: s.gpu_bound,
                order: i,
            })
            .collect();
        let pipeline = match Pipeline::new(stages, derive_seed(self.seed, 3)) {
            Ok(p) => p,
            Err(e) => {
                d.push("xr.stages", e);
                return (None, None);
            }
        };
        let profiles = match pipeline.profile_all(self.xr.profile_samples) {
            Ok(p) => p,
            Err(e) => {
                d.push("xr.profile_samples", e);
                return (None, None);
            }
        };
        let t: Vec<f64> = profiles.iter().map(|p| p.t_i).collect();
        match min_period_bound(&t, frame, self.xr.bound) {
            Ok(b) => (Some(pipeline), Some(b)),
            Err(e) => {
                d.push("periods.frame", e);
                (None, None)
            }
        }
    }

    fn resolve_cloud(&self, down: &ChannelConfig, d: &mut Diagnostics) -> Option<CloudPlan> {
        let c = &self.cloud;
        if !(c.bandwidth_fraction > 0.0 && c.bandwidth_fraction <= 1.0) {
            d.push("cloud.bandwidth_fraction", "must be in (0, 1]");
            return None;
        }
        let scene = match render(&c.scene) {
            Ok(s) => s,
            Err(e) => {
                d.push("cloud.scene", e);
                return None;
            }
        };
        let scaling = ScalingConfig {
            bandwidth: c.bandwidth_fraction * down.bandwidth,
            point_size: c.point_size,
            t_rt: self.periods.talker,
            canny: c.canny,
        };
        if let Err(e) = scaling.validate() {
            d.push("cloud", e);
            return None;
        }
        let raw_points = scene.cloud.point_count();
        let budget = n_max(&scaling);
        if !c.scaling {
            return Some(CloudPlan {
                block: scene.cloud.to_block(),
                raw_points,
                n_max: budget,
                r: 1.0,
            });
        }
        let scaled = scale_to_budget(&scene.cloud, &scaling);
        Some(CloudPlan {
            block: scaled.cloud.to_block(),
            raw_points,
            n_max: budget,
            r: scaled.r,
        })
    }
}

impl Resolved {
    /// Robot start: the first trace sample mapped into the robot frame, with
    /// joints solved from home.
    pub fn robot_start(&self) -> (Pose, JointConfig) {
        let first = self.transform.compose(&self.trace.first().pose);
        let q = match solve_ik(&self.arm, &self.home, &first, &self.config.arm.ik) {
            Ok(sol) => sol.q,
            Err(crate::kinematics::KinematicsError::Unreachable { best, .. }) => best,
            Err(_) => self.home.clone(),
        };
        (first, q)
    }
}
