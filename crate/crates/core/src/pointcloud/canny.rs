//! Canny edge detection on an organized depth image with invalid pixels.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    /// Gaussian standard deviation in pixels; 0 disables smoothing.
    pub sigma: f64,
    /// Hysteresis thresholds as fractions of the largest gradient magnitude.
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.4,
            low: 0.1,
            high: 0.3,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(0.0 <= self.low && self.low < self.high && self.high <= 1.0) {
            return Err(format!("need 0 <= low < high <= 1, got {} / {}", self.low, self.high));
        }
        Ok(())
    }
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian that only averages over valid pixels, renormalizing
/// the weights, so holes do not bleed into their surroundings.
pub fn masked_blur(img: &[f64], valid: &[bool], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let pass = |src: &[f64], src_w: &[f64], horizontal: bool| {
        let mut out = vec![0.0; w * h];
        let mut out_w = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (j, kv) in k.iter().enumerate() {
                    let o = j as isize - r;
                    let (sx, sy) = if horizontal { (x as isize + o, y as isize) } else { (x as isize, y as isize + o) };
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue;
                    }
                    let i = sy as usize * w + sx as usize;
                    acc += kv * src[i] * src_w[i];
                    wsum += kv * src_w[i];
                }
                let i = y * w + x;
                out_w[i] = wsum;
                out[i] = if wsum > 0.0 { acc / wsum } else { 0.0 };
            }
        }
        (out, out_w)
    };
    let weights: Vec<f64> = valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let (tmp, tmp_w) = pass(img, &weights, true);
    let (out, _) = pass(&tmp, &tmp_w, false);
    out.iter()
        .zip(valid)
        .map(|(&v, &ok)| if ok { v } else { 0.0 })
        .collect()
}

/// Sobel gradients. Out-of-image and invalid neighbours take the centre
/// value; invalid pixels get a zero gradient.
pub fn sobel(img: &[f64], valid: &[bool], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = y * w + x;
            if !valid[c] {
                continue;
            }
            let at = |dx: isize, dy: isize| {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                    return img[c];
                }
                let i = sy as usize * w + sx as usize;
                if valid[i] {
                    img[i]
                } else {
                    img[c]
                }
            };
            gx[c] = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
            gy[c] = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
        }
    }
    (gx, gy)
}

/// Neighbour offset along the gradient, quantized to 0°, 45°, 90° or 135°.
fn direction(gx: f64, gy: f64) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Relative difference under which two gradient magnitudes are equal.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Thin edges to local maxima along the gradient. On a tie the pixel on the
/// low-depth side of the gradient survives, so a depth step yields a one
/// pixel wide edge on the nearer surface.
pub fn non_max_suppression(mag: &[f64], gx: &[f64], gy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = y * w + x;
            let m = mag[c];
            if m == 0.0 {
                continue;
            }
            let (mut dx, mut dy) = direction(gx[c], gy[c]);
            // orient the offset along +gradient
            if (dx as f64) * gx[c] + (dy as f64) * gy[c] < 0.0 {
                dx = -dx;
                dy = -dy;
            }
            let sample = |sx: isize, sy: isize| {
                if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                    0.0
                } else {
                    mag[sy as usize * w + sx as usize]
                }
            };
            let ahead = sample(x as isize + dx, y as isize + dy);
            let behind = sample(x as isize - dx, y as isize - dy);
            // ties within rounding count as ties
            let tol = TIE_TOLERANCE * m;
            if m >= ahead - tol && m > behind + tol {
                out[c] = m;
            }
        }
    }
    out
}

/// Double threshold with 8-connected hysteresis. Strict comparisons.
pub fn hysteresis(nms: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edge = vec![false; w * h];
    let mut frontier = VecDeque::new();
    for (i, &m) in nms.iter().enumerate() {
        if m > high {
            edge[i] = true;
            frontier.push_back(i);
        }
    }
    while let Some(i) = frontier.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edge[j] && nms[j] > low {
                    edge[j] = true;
                    frontier.push_back(j);
                }
            }
        }
    }
    edge
}

/// Gradients below this (sub-micron depth change across the Sobel window)
/// are treated as flat; it keeps blur rounding on planes from becoming edges.
pub const MIN_GRADIENT: f64 = 1e-6;

/// Full Canny on a depth grid where `depth <= 0` marks invalid pixels.
/// Returns a per-pixel edge flag; invalid pixels are never edges.
pub fn canny(depth: &[f32], w: usize, h: usize, params: &CannyParams) -> Vec<bool> {
    let valid: Vec<bool> = depth.iter().map(|&d| d > 0.0 && d.is_finite()).collect();
    if w < 3 || h < 3 {
        return vec![false; w * h];
    }
    let img: Vec<f64> = depth.iter().map(|&d| d as f64).collect();
    let smooth = masked_blur(&img, &valid, w, h, params.sigma);
    let (gx, gy) = sobel(&smooth, &valid, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max <= MIN_GRADIENT {
        return vec![false; w * h];
    }
    let nms = non_max_suppression(&mag, &gx, &gy, w, h);
    hysteresis(&nms, w, h, params.low * max, params.high * max)
}
