//! Synthetic organized depth scenes rendered through a pinhole camera.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CloudError, OrganizedCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square pixels, principal point at the image centre, roughly 60° across.
    pub fn for_size(width: usize, height: usize) -> Self {
        let f = width as f64 * 0.866;
        Intrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    /// Ray direction (z = 1) through pixel `(u, v)`.
    pub fn ray(&self, u: usize, v: usize) -> (f64, f64) {
        ((u as f64 - self.cx) / self.fx, (v as f64 - self.cy) / self.fy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneSpec {
    /// Fronto-parallel plane.
    Plane { depth: f64 },
    /// Axis-aligned cube resting on a fronto-parallel plane, facing the camera.
    /// The seed jitters the cube's lateral offset.
    CubeOnPlane { plane_depth: f64, size: f64 },
    /// Near plane on the left of `column`, far plane from `column` on.
    Step { near: f64, far: f64, column: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub scene: SceneSpec,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of additive depth noise, meters.
    #[serde(default)]
    pub noise: f64,
    /// Fraction of pixels randomly invalidated.
    #[serde(default)]
    pub dropout: f64,
}

/// A rendered scene together with its analytic cube silhouette (pixels on the
/// cube that touch the plane), when there is one.
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub cloud: OrganizedCloud,
    pub silhouette: Vec<bool>,
}

pub fn render(cfg: &SceneConfig) -> Result<RenderedScene, CloudError> {
    let (w, h) = (cfg.width, cfg.height);
    if w == 0 || h == 0 || w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(CloudError::Invalid(format!("bad image size {w}x{h}")));
    }
    if !(0.0..=1.0).contains(&cfg.dropout) || !(cfg.noise >= 0.0) {
        return Err(CloudError::Invalid("noise must be >= 0 and dropout in [0, 1]".into()));
    }
    let k = Intrinsics::for_size(w, h);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut depth = vec![0.0f32; w * h];
    let mut on_cube = vec![false; w * h];
    match cfg.scene {
        SceneSpec::Plane { depth: d } => {
            check_depth(d)?;
            depth.fill(d as f32);
        }
        SceneSpec::Step { near, far, column } => {
            check_depth(near)?;
            check_depth(far)?;
            for v in 0..h {
                for u in 0..w {
                    depth[v * w + u] = if u < column { near } else { far } as f32;
                }
            }
        }
        SceneSpec::CubeOnPlane { plane_depth, size } => {
            check_depth(plane_depth)?;
            if !(size > 0.0 && size < plane_depth) {
                return Err(CloudError::Invalid(format!("cube size {size} must be in (0, plane depth)")));
            }
            let front = plane_depth - size;
            // keep the cube's front face inside the view
            let half_view = (k.cx / k.fx).min(k.cy / k.fy) * front;
            let slack = (half_view - size / 2.0).max(0.0) * 0.5;
            let ox = rng.random_range(-slack..=slack);
            let oy = rng.random_range(-slack..=slack);
            for v in 0..h {
                for u in 0..w {
                    let (rx, ry) = k.ray(u, v);
                    let (x, y) = (rx * front, ry * front);
                    let hit = (x - ox).abs() <= size / 2.0 && (y - oy).abs() <= size / 2.0;
                    let i = v * w + u;
                    on_cube[i] = hit;
                    depth[i] = if hit { front } else { plane_depth } as f32;
                }
            }
        }
    }
    if cfg.noise > 0.0 {
        let n = Normal::new(0.0, cfg.noise).map_err(|e| CloudError::Invalid(e.to_string()))?;
        for d in depth.iter_mut() {
            *d = (*d as f64 + n.sample(&mut rng)).max(1e-3) as f32;
        }
    }
    if cfg.dropout > 0.0 {
        for d in depth.iter_mut() {
            if rng.random::<f64>() < cfg.dropout {
                *d = 0.0;
            }
        }
    }
    let mut silhouette = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            if !on_cube[i] {
                continue;
            }
            let neighbours = [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)];
            silhouette[i] = neighbours.iter().any(|&(dx, dy)| {
                let (x, y) = (u as isize + dx, v as isize + dy);
                x >= 0 && y >= 0 && x < w as isize && y < h as isize && !on_cube[y as usize * w + x as usize]
            });
        }
    }
    let cloud = OrganizedCloud::from_depth(w, h, depth, &k)?;
    Ok(RenderedScene { cloud, silhouette })
}

fn check_depth(d: f64) -> Result<(), CloudError> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(CloudError::Invalid(format!("depth must be > 0, got {d}")))
    }
}
