//! Organized depth clouds, edge classification and bandwidth-bounded scaling.

pub mod canny;
pub mod scene;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use canny::CannyParams;
pub use scene::{render, Intrinsics, RenderedScene, SceneConfig, SceneSpec};

use crate::netsim::wire::{CloudPoint, PointBlock, Reader, WireError, POINT_RECORD_LEN};

#[derive(Debug, thiserror::Error)]
pub enum CloudError {
    #[error("invalid cloud: {0}")]
    Invalid(String),
    #[error("decode: {0}")]
    Wire(#[from] WireError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganizedCloud {
    pub width: usize,
    pub height: usize,
    /// Row-major depth in meters; `0` marks an invalid pixel.
    pub depth: Vec<f32>,
    /// One point per valid pixel, row-major.
    pub points: Vec<CloudPoint>,
}

impl OrganizedCloud {
    /// Back-projects every valid pixel; colour is a grey ramp over depth.
    pub fn from_depth(width: usize, height: usize, depth: Vec<f32>, k: &Intrinsics) -> Result<Self, CloudError> {
        if depth.len() != width * height {
            return Err(CloudError::Invalid(format!(
                "depth has {} values for {width}x{height}",
                depth.len()
            )));
        }
        let mut points = Vec::new();
        for v in 0..height {
            for u in 0..width {
                let z = depth[v * width + u];
                if !is_valid(z) {
                    continue;
                }
                let (rx, ry) = k.ray(u, v);
                let grey = (255.0 * (1.0 - (z as f64 / 5.0).min(1.0))) as u8;
                points.push(CloudPoint {
                    x: (rx * z as f64) as f32,
                    y: (ry * z as f64) as f32,
                    z,
                    rgba: [grey, grey, grey, 255],
                });
            }
        }
        Ok(OrganizedCloud {
            width,
            height,
            depth,
            points,
        })
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    /// Pixel index of every point, row-major.
    pub fn valid_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.depth.iter().enumerate().filter(|(_, d)| is_valid(**d)).map(|(i, _)| i)
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        if self.depth.len() != self.width * self.height {
            return Err(CloudError::Invalid("depth grid size mismatch".into()));
        }
        let valid = self.valid_pixels().count();
        if valid != self.points.len() {
            return Err(CloudError::Invalid(format!(
                "{} points for {valid} valid pixels",
                self.points.len()
            )));
        }
        Ok(())
    }

    pub fn to_block(&self) -> PointBlock {
        PointBlock {
            width: self.width as u16,
            height: self.height as u16,
            points: self.points.clone(),
        }
    }

    /// Writes the point block to `path` and the depth grid to `<path>.depth`.
    pub fn save(&self, path: &Path) -> Result<(), CloudError> {
        let mut block = Vec::new();
        self.to_block().write_to(&mut block);
        std::fs::File::create(path)?.write_all(&block)?;
        let mut side = Vec::with_capacity(8 + 4 * self.depth.len());
        side.extend_from_slice(&(self.width as u32).to_le_bytes());
        side.extend_from_slice(&(self.height as u32).to_le_bytes());
        for d in &self.depth {
            side.extend_from_slice(&d.to_le_bytes());
        }
        std::fs::File::create(depth_path(path))?.write_all(&side)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CloudError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = Reader::new(&buf);
        let block = PointBlock::read_from(&mut r)?;
        if r.remaining() != 0 {
            return Err(WireError::TrailingBytes { offset: r.offset(), extra: r.remaining() }.into());
        }
        let mut side = Vec::new();
        std::fs::File::open(depth_path(path))?.read_to_end(&mut side)?;
        let mut r = Reader::new(&side);
        let (w, h) = (r.u32()? as usize, r.u32()? as usize);
        if (w, h) != (block.width as usize, block.height as usize) {
            return Err(CloudError::Invalid("sidecar size differs from point block".into()));
        }
        let mut depth = Vec::with_capacity(w * h);
        for _ in 0..w * h {
            depth.push(r.f32()?);
        }
        let cloud = OrganizedCloud {
            width: w,
            height: h,
            depth,
            points: block.points,
        };
        cloud.validate()?;
        Ok(cloud)
    }
}

fn depth_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".depth");
    PathBuf::from(s)
}

fn is_valid(d: f32) -> bool {
    d > 0.0 && d.is_finite()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    /// Bandwidth B, bytes/s.
    pub bandwidth: f64,
    /// Bytes per point b.
    pub point_size: usize,
    /// Robot talker period T_rt, seconds.
    pub t_rt: f64,
    pub canny: CannyParams,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            bandwidth: 1.6e6,
            point_size: POINT_RECORD_LEN,
            t_rt: 0.04,
            canny: CannyParams::default(),
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<(), CloudError> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(CloudError::Invalid(format!("bandwidth must be > 0, got {}", self.bandwidth)));
        }
        if self.point_size == 0 {
            return Err(CloudError::Invalid("point_size must be > 0".into()));
        }
        if !(self.t_rt > 0.0 && self.t_rt.is_finite()) {
            return Err(CloudError::Invalid(format!("t_rt must be > 0, got {}", self.t_rt)));
        }
        self.canny.validate().map_err(CloudError::Invalid)
    }
}

/// Points that fit in one talker period: `⌊B·T_rt / b⌋`.
pub fn n_max(cfg: &ScalingConfig) -> usize {
    (cfg.bandwidth * cfg.t_rt / cfg.point_size as f64).floor() as usize
}

pub fn should_scale(cloud: &OrganizedCloud, n_max: usize) -> bool {
    cloud.point_count() > n_max
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub width: usize,
    pub height: usize,
    pub edge: Vec<bool>,
    pub n_e: usize,
    pub n_in: usize,
}

pub fn classify_edges(cloud: &OrganizedCloud, params: &CannyParams) -> EdgeMask {
    let edge = canny::canny(&cloud.depth, cloud.width, cloud.height, params);
    let n_e = cloud.valid_pixels().filter(|&i| edge[i]).count();
    EdgeMask {
        width: cloud.width,
        height: cloud.height,
        n_in: cloud.point_count() - n_e,
        edge,
        n_e,
    }
}

/// `r = clamp(min(1, (N_max − N_e) / N_in), 0, 1)`, with `r = 1` when there
/// are no interior points.
pub fn scale_factor(n_max: usize, n_e: usize, n_in: usize) -> f64 {
    if n_in == 0 {
        return 1.0;
    }
    ((n_max as f64 - n_e as f64) / n_in as f64).clamp(0.0, 1.0)
}

/// Keeps every edge point and `⌊r·N_in⌋` interior points chosen at even
/// stride in row-major order. Removed pixels become invalid in the depth grid.
pub fn downsample(cloud: &OrganizedCloud, mask: &EdgeMask, r: f64) -> OrganizedCloud {
    let r = r.clamp(0.0, 1.0);
    let n_in = mask.n_in;
    let keep_in = ((r * n_in as f64).floor() as usize).min(n_in);
    let mut out = OrganizedCloud {
        width: cloud.width,
        height: cloud.height,
        depth: vec![0.0; cloud.depth.len()],
        points: Vec::with_capacity(mask.n_e + keep_in),
    };
    // interior rank k survives iff it is ⌊i·N_in/m⌋ for some i < m
    let mut next_i = 0usize;
    let mut next_rank = 0usize;
    let mut rank = 0usize;
    for (p, pix) in cloud.valid_pixels().enumerate() {
        let keep = if mask.edge[pix] {
            true
        } else {
            let hit = next_i < keep_in && rank == next_rank;
            if hit {
                next_i += 1;
                next_rank = next_i * n_in / keep_in.max(1);
            }
            rank += 1;
            hit
        };
        if keep {
            out.depth[pix] = cloud.depth[pix];
            out.points.push(cloud.points[p]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledCloud {
    pub cloud: OrganizedCloud,
    pub scaled: bool,
    pub n_e: usize,
    pub n_in: usize,
    pub r: f64,
    /// Edge points alone exceeded the budget.
    pub over_budget: bool,
}

/// Passes the cloud through untouched when it fits, otherwise thins interior
/// points to the budget.
pub fn scale_to_budget(cloud: &OrganizedCloud, cfg: &ScalingConfig) -> ScaledCloud {
    let budget = n_max(cfg);
    if !should_scale(cloud, budget) {
        return ScaledCloud {
            cloud: cloud.clone(),
            scaled: false,
            n_e: 0,
            n_in: cloud.point_count(),
            r: 1.0,
            over_budget: false,
        };
    }
    let mask = classify_edges(cloud, &cfg.canny);
    let r = scale_factor(budget, mask.n_e, mask.n_in);
    ScaledCloud {
        cloud: downsample(cloud, &mask, r),
        scaled: true,
        n_e: mask.n_e,
        n_in: mask.n_in,
        r,
        over_budget: mask.n_e > budget,
    }
}
