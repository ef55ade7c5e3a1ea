//! Browser bindings. Every export returns a JSON string; the page parses it.
//!
//! The plain functions are usable (and tested) outside the browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use teleop_core::harness::config::LinkConfig;
use teleop_core::harness::{scenarios, simulate, Mode, SimConfig};
use teleop_core::netsim::Jitter;
use teleop_core::pointcloud::{classify_edges, n_max, scale_to_budget, OrganizedCloud, ScalingConfig};
use teleop_core::pointcloud::{render, SceneConfig, SceneSpec};

#[derive(Debug, Serialize)]
pub struct ScaleResult {
    pub width: usize,
    pub height: usize,
    pub n_max: usize,
    pub raw_points: usize,
    pub n_e: usize,
    pub n_in: usize,
    pub r: f64,
    pub kept: usize,
    pub over_budget: bool,
    /// Per pixel: 0 empty, 1 dropped interior, 2 kept interior, 3 edge.
    pub pixels: Vec<u8>,
}

/// Renders a cube on a plane and thins it to what `bandwidth` bytes/s carries
/// in one talker period.
pub fn scale_demo(width: usize, height: usize, bandwidth: f64, t_rt: f64, seed: u64) -> Result<ScaleResult, String> {
    let scene = render(&SceneConfig {
        width,
        height,
        scene: SceneSpec::CubeOnPlane {
            plane_depth: 1.5,
            size: 0.4,
        },
        seed,
        noise: 0.0,
        dropout: 0.0,
    })
    .map_err(|e| e.to_string())?;
    let cfg = ScalingConfig {
        bandwidth,
        t_rt,
        ..ScalingConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let cloud: &OrganizedCloud = &scene.cloud;
    let scaled = scale_to_budget(cloud, &cfg);
    let mask = classify_edges(cloud, &cfg.canny);
    let pixels = (0..cloud.depth.len())
        .map(|i| {
            if cloud.depth[i] <= 0.0 {
                0
            } else if mask.edge[i] {
                3
            } else if scaled.cloud.depth[i] > 0.0 {
                2
            } else {
                1
            }
        })
        .collect();
    Ok(ScaleResult {
        width,
        height,
        n_max: n_max(&cfg),
        raw_points: cloud.point_count(),
        n_e: mask.n_e,
        n_in: mask.n_in,
        r: scaled.r,
        kept: scaled.cloud.point_count(),
        over_budget: scaled.over_budget,
        pixels,
    })
}

#[derive(Debug, Serialize)]
pub struct RunResult {
    pub mode: String,
    pub mean_error_mm: Option<f64>,
    pub m2m_reconstructed_ms: Option<f64>,
    pub m2m_actual_ms: Option<f64>,
    pub pose_update_rate: f64,
    pub frame_rate: f64,
    /// Frame times (s), hand x/y and drawn robot x/y in the hand frame (m).
    pub t: Vec<f64>,
    pub user_x: Vec<f64>,
    pub user_y: Vec<f64>,
    pub robot_x: Vec<f64>,
    pub robot_y: Vec<f64>,
}

fn degraded(mode: Mode, latency_ms: f64, jitter_ms: f64, drop_pct: f64, seed: u64) -> SimConfig {
    let mut cfg = scenarios::degraded_sinusoid(drop_pct / 100.0);
    cfg.mode = mode;
    cfg.seed = seed;
    for l in [&mut cfg.uplink, &mut cfg.downlink] {
        *l = LinkConfig {
            base_latency: Some(latency_ms / 1e3),
            jitter: (jitter_ms > 0.0).then_some(Jitter::Uniform {
                half_width: jitter_ms / 1e3,
            }),
            ..l.clone()
        };
    }
    cfg
}

/// One sinusoid run over symmetric degraded links.
pub fn run_sinusoid(mode: &str, latency_ms: f64, jitter_ms: f64, drop_pct: f64, seed: u64) -> Result<RunResult, String> {
    let mode: Mode = mode.parse()?;
    let r = degraded(mode, latency_ms, jitter_ms, drop_pct, seed)
        .resolve()
        .map_err(|e| e.to_string())?;
    let out = simulate(&r);
    let back = r.transform.inverse();
    let mut res = RunResult {
        mode: mode.to_string(),
        mean_error_mm: out.report.teleop_error.mean_position.map(|e| e * 1e3),
        m2m_reconstructed_ms: out.report.m2m.reconstructed.mean.map(|m| m * 1e3),
        m2m_actual_ms: out.report.m2m.actual.mean.map(|m| m * 1e3),
        pose_update_rate: out.report.frames.pose_update_rate,
        frame_rate: out.report.frames.rate,
        t: Vec::new(),
        user_x: Vec::new(),
        user_y: Vec::new(),
        robot_x: Vec::new(),
        robot_y: Vec::new(),
    };
    for f in &out.frames {
        let robot = back.compose(&f.robot_pose_shown).position;
        res.t.push(f.display_time.as_secs_f64());
        res.user_x.push(f.user_pose.position.x);
        res.user_y.push(f.user_pose.position.y);
        res.robot_x.push(robot.x);
        res.robot_y.push(robot.y);
    }
    Ok(res)
}

#[derive(Debug, Serialize)]
pub struct PairedRow {
    pub seed: u64,
    pub telexr_mm: f64,
    pub baseline_mm: f64,
}

/// Paired-seed mean position error of both modes, seeds `0..seeds`.
pub fn compare_modes(latency_ms: f64, jitter_ms: f64, drop_pct: f64, seeds: u64) -> Result<Vec<PairedRow>, String> {
    (0..seeds)
        .map(|seed| {
            let err = |mode| -> Result<f64, String> {
                let r = degraded(mode, latency_ms, jitter_ms, drop_pct, seed)
                    .resolve()
                    .map_err(|e| e.to_string())?;
                simulate(&r)
                    .report
                    .teleop_error
                    .mean_position
                    .map(|e| e * 1e3)
                    .ok_or_else(|| "run produced no frames".to_string())
            };
            Ok(PairedRow {
                seed,
                telexr_mm: err(Mode::Telexr)?,
                baseline_mm: err(Mode::Baseline)?,
            })
        })
        .collect()
}

fn to_js<T: Serialize>(v: Result<T, String>) -> Result<String, JsValue> {
    v.and_then(|x| serde_json::to_string(&x).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = scaleDemo)]
pub fn scale_demo_js(width: usize, height: usize, bandwidth: f64, t_rt: f64, seed: u32) -> Result<String, JsValue> {
    to_js(scale_demo(width, height, bandwidth, t_rt, seed as u64))
}

#[wasm_bindgen(js_name = runSinusoid)]
pub fn run_sinusoid_js(mode: &str, latency_ms: f64, jitter_ms: f64, drop_pct: f64, seed: u32) -> Result<String, JsValue> {
    to_js(run_sinusoid(mode, latency_ms, jitter_ms, drop_pct, seed as u64))
}

#[wasm_bindgen(js_name = compareModes)]
pub fn compare_modes_js(latency_ms: f64, jitter_ms: f64, drop_pct: f64, seeds: u32) -> Result<String, JsValue> {
    to_js(compare_modes(latency_ms, jitter_ms, drop_pct, seeds as u64))
}
