//! Canny edge detection.
//!
//! Gaussian smoothing, Sobel gradients, non-maximum suppression quantized to
//! four directions and hysteresis. Thresholds are relative: the high threshold
//! is a quantile of the nonzero gradient magnitudes, the low one a fraction of
//! the high one, so the detector adapts to illumination.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayImage};

/// Magnitudes at or below this are treated as zero gradient.
const ZERO_GRADIENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannyParams {
    pub sigma: f64,
    pub high_quantile: f64,
    pub low_ratio: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            high_quantile: 0.90,
            low_ratio: 0.4,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig("canny sigma must be positive".into()));
        }
        if !(self.high_quantile > 0.0 && self.high_quantile < 1.0) {
            return Err(Error::InvalidConfig("canny high_quantile must be in (0, 1)".into()));
        }
        if !(self.low_ratio > 0.0 && self.low_ratio < 1.0) {
            return Err(Error::InvalidConfig("canny low_ratio must be in (0, 1)".into()));
        }
        Ok(())
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * img.get(r, clamp_index(c as isize + i as isize - radius, w)))
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp_index(r as isize + i as isize - radius, h) * w + c])
                .sum();
        }
    }
    GrayImage::new(w, h, out).expect("blur preserves dimensions")
}

/// Sobel gradients `(d/dcol, d/drow)` with replicated borders.
pub fn sobel(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let at = |r: isize, c: isize| img.get(clamp_index(r, h), clamp_index(c, w));
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            gx[i] = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            gy[i] = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
        }
    }
    (gx, gy)
}

/// Nearest-rank quantile of an unsorted sample.
pub(crate) fn quantile(values: &mut [f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    let (_, v, _) = values.select_nth_unstable_by(rank, f64::total_cmp);
    *v
}

/// Gradient magnitude and the non-maximum-suppressed ridge.
fn suppressed_magnitude(img: &GrayImage, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let smooth = gaussian_blur(img, sigma);
    let (gx, gy) = sobel(&smooth);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let mut nms = vec![0.0; w * h];
    if w < 3 || h < 3 {
        return (mag, nms);
    }
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let i = r * w + c;
            let m = mag[i];
            if m <= ZERO_GRADIENT {
                continue;
            }
            // Angle folded into [0, 180); rows grow downward.
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (before, after) = if !(22.5..157.5).contains(&angle) {
                (i - 1, i + 1)
            } else if angle < 67.5 {
                (i - w - 1, i + w + 1)
            } else if angle < 112.5 {
                (i - w, i + w)
            } else {
                (i - w + 1, i + w - 1)
            };
            // Strict on one side so a two-pixel plateau keeps a single pixel.
            if m > mag[before] && m >= mag[after] {
                nms[i] = m;
            }
        }
    }
    (mag, nms)
}

/// Canny edge mask. A constant image yields no edges.
pub fn canny(img: &GrayImage, p: &CannyParams) -> BinaryMask {
    let (w, h) = (img.width(), img.height());
    let (mag, nms) = suppressed_magnitude(img, p.sigma);
    let mut nonzero: Vec<f64> = mag.into_iter().filter(|&m| m > ZERO_GRADIENT).collect();
    let mut edges = BinaryMask::empty(w, h);
    if nonzero.is_empty() {
        return edges;
    }
    let high = quantile(&mut nonzero, p.high_quantile);
    let low = p.low_ratio * high;

    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut marked = vec![false; w * h];
    for (i, &m) in nms.iter().enumerate() {
        if m >= high && m > ZERO_GRADIENT {
            marked[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if !marked[j] && nms[j] >= low && nms[j] > ZERO_GRADIENT {
                    marked[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    for (i, m) in marked.into_iter().enumerate() {
        if m {
            edges.set(i / w, i % w, true);
        }
    }
    edges
}
