//! Frequency-domain denoising and contrast equalization.
//!
//! The 2D transform runs a 1D FFT over every row and then every column, so
//! arbitrary (non power-of-two) sizes are handled without padding. Spectra
//! returned by [`dft2`] are DC-centered: the zero-frequency term sits at
//! `(height / 2, width / 2)`.

use std::sync::Arc;

pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{histogram256, quantize, GrayImage};

/// Largest imaginary residue tolerated when inverting a spectrum of a real image.
pub const MAX_IMAG_RESIDUE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
    pub dc_centered: bool,
}

impl Spectrum {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Complex64::new(0.0, 0.0); width * height],
            dc_centered: true,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    /// Position of the zero-frequency bin.
    pub fn dc_position(&self) -> (usize, usize) {
        if self.dc_centered {
            (self.height / 2, self.width / 2)
        } else {
            (0, 0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ButterworthParams {
    pub order: u32,
    /// Normalized radial frequency, 0.5 is Nyquist.
    pub cutoff: f64,
}

impl Default for ButterworthParams {
    fn default() -> Self {
        Self { order: 9, cutoff: 0.25 }
    }
}

impl ButterworthParams {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidConfig("butterworth order must be >= 1".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "butterworth cutoff {} outside (0, 0.5]",
                self.cutoff
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Forward,
    Inverse,
}

fn plan(len: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    match dir {
        Direction::Forward => planner.plan_fft_forward(len),
        Direction::Inverse => planner.plan_fft_inverse(len),
    }
}

fn transform_rows(data: &mut [Complex64], width: usize, dir: Direction) {
    let fft = plan(width, dir);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(width).for_each(|row| fft.process(row));
    }
    #[cfg(not(feature = "parallel"))]
    fft.process(data);
}

fn transpose(data: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = data[r * width + c];
        }
    }
    out
}

/// Unnormalized 2D transform in natural (DC at origin) layout.
pub(crate) fn fft2_in_place(data: &mut Vec<Complex64>, width: usize, height: usize, inverse: bool) {
    let dir = if inverse {
        Direction::Inverse
    } else {
        Direction::Forward
    };
    transform_rows(data, width, dir);
    let mut t = transpose(data, width, height);
    transform_rows(&mut t, height, dir);
    *data = transpose(&t, height, width);
}

/// Moves the zero-frequency term from `(0, 0)` to `(height / 2, width / 2)`.
fn fftshift(data: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    let (hr, hc) = (height / 2, width / 2);
    for r in 0..height {
        let dr = (r + hr) % height;
        for c in 0..width {
            out[dr * width + (c + hc) % width] = data[r * width + c];
        }
    }
    out
}

fn ifftshift(data: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    let (hr, hc) = (height / 2, width / 2);
    for r in 0..height {
        let sr = (r + hr) % height;
        for c in 0..width {
            out[r * width + c] = data[sr * width + (c + hc) % width];
        }
    }
    out
}

/// Forward 2D DFT, DC-centered and unnormalized.
pub fn dft2(img: &GrayImage) -> Spectrum {
    let (w, h) = (img.width(), img.height());
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut data, w, h, false);
    Spectrum {
        width: w,
        height: h,
        data: fftshift(&data, w, h),
        dc_centered: true,
    }
}

/// Inverse transform keeping the real part, without clamping.
///
/// Fails when the imaginary residue exceeds [`MAX_IMAG_RESIDUE`], i.e. the
/// spectrum was not the transform of a real image.
pub fn idft2_unclamped(spec: &Spectrum) -> Result<GrayImage> {
    let (w, h) = (spec.width, spec.height);
    let mut data = if spec.dc_centered {
        ifftshift(&spec.data, w, h)
    } else {
        spec.data.clone()
    };
    fft2_in_place(&mut data, w, h, true);
    let scale = 1.0 / (w * h) as f64;
    let max_imag = data.iter().fold(0.0f64, |m, z| m.max((z.im * scale).abs()));
    if max_imag > MAX_IMAG_RESIDUE {
        return Err(Error::NumericConsistency { max_imag });
    }
    GrayImage::new(w, h, data.iter().map(|z| z.re * scale).collect())
}

/// Inverse transform, clamped into `[0, 1]`.
pub fn idft2(spec: &Spectrum) -> Result<GrayImage> {
    Ok(crate::raster::clamp01(&idft2_unclamped(spec)?))
}

pub fn butterworth_gain(d: f64, p: &ButterworthParams) -> f64 {
    1.0 / (1.0 + (d / p.cutoff).powi(2 * p.order as i32))
}

/// Per-axis normalized radial distance of a centered bin from DC.
#[inline]
fn radial_frequency(row: usize, col: usize, width: usize, height: usize) -> f64 {
    let u = (row as f64 - (height / 2) as f64) / height as f64;
    let v = (col as f64 - (width / 2) as f64) / width as f64;
    u.hypot(v)
}

/// Multiplies a centered spectrum by the Butterworth low-pass gain.
pub fn apply_lowpass(spec: &mut Spectrum, p: &ButterworthParams) {
    assert!(spec.dc_centered, "low-pass expects a DC-centered spectrum");
    let (w, h) = (spec.width, spec.height);
    for r in 0..h {
        for c in 0..w {
            spec.data[r * w + c] *= butterworth_gain(radial_frequency(r, c, w, h), p);
        }
    }
}

/// Filter without the final clamp; linear in the input.
pub fn lowpass_unclamped(img: &GrayImage, p: &ButterworthParams) -> Result<GrayImage> {
    p.validate()?;
    let mut spec = dft2(img);
    apply_lowpass(&mut spec, p);
    idft2_unclamped(&spec)
}

pub fn lowpass_filter(img: &GrayImage, p: &ButterworthParams) -> Result<GrayImage> {
    Ok(crate::raster::clamp01(&lowpass_unclamped(img, p)?))
}

/// Log-magnitude view, `log(1 + |F|)` min-max normalized, DC in the middle.
pub fn spectrum_view(spec: &Spectrum) -> GrayImage {
    let (w, h) = (spec.width, spec.height);
    let mags: Vec<f64> = if spec.dc_centered {
        spec.data.iter().map(|z| z.norm().ln_1p()).collect()
    } else {
        fftshift(&spec.data, w, h).iter().map(|z| z.norm().ln_1p()).collect()
    };
    GrayImage::new(w, h, mags)
        .expect("spectrum dimensions are consistent")
        .normalized()
}

/// 256-level lookup table used by [`equalize_histogram`]; `None` when only
/// one level is occupied.
pub fn equalization_lut(hist: &[u64; 256]) -> Option<[u8; 256]> {
    let total: u64 = hist.iter().sum();
    let first = hist.iter().position(|&n| n > 0)?;
    let cdf_min = hist[first];
    if total == cdf_min {
        return None;
    }
    let denom = (total - cdf_min) as f64;
    let mut lut = [0u8; 256];
    let mut cdf = 0u64;
    for (level, &n) in hist.iter().enumerate() {
        cdf += n;
        lut[level] = if cdf < cdf_min {
            0
        } else {
            (255.0 * (cdf - cdf_min) as f64 / denom).round() as u8
        };
    }
    Some(lut)
}

/// Standard histogram equalization over 256 levels.
///
/// An image with a single occupied level is returned unchanged.
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    match equalization_lut(&histogram256(img)) {
        None => img.clone(),
        Some(lut) => img.map(|v| lut[quantize(v) as usize] as f64 / 255.0),
    }
}
