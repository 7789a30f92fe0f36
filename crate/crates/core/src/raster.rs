//! Raster containers shared by every stage.
//!
//! All images are row-major with the origin at the top-left corner and are
//! addressed as `(row, col)`. Gray intensities are `f64` in `[0, 1]`; 8-bit
//! quantization only happens at file I/O and in [`histogram256`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps an intensity in `[0, 1]` to one of 256 levels.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, self.height - 1, 0, self.width - 1)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the pixels covered by `rect`.
    pub fn crop(&self, rect: Rect) -> Result<Self> {
        if !rect.fits(self.width, self.height) {
            return Err(Error::OutOfBounds {
                rect,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(rect.area());
        for r in rect.row_min..=rect.row_max {
            let start = r * self.width;
            data.extend_from_slice(&self.data[start + rect.col_min..=start + rect.col_max]);
        }
        Self::new(rect.width(), rect.height(), data)
    }

    /// 8-bit view of the image, as written to PGM.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    /// Min-max normalization into `[0, 1]`. A flat image maps to zeros.
    pub fn normalized(&self) -> Self {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        if !(span > 0.0) {
            return Self::filled(self.width, self.height, 0.0);
        }
        self.map(|v| (v - lo) / span)
    }
}

/// Replaces every intensity by `min(1, max(0, v))`.
pub fn clamp01(img: &GrayImage) -> GrayImage {
    img.map(|v| v.clamp(0.0, 1.0))
}

/// Bin `k` counts the pixels whose intensity quantizes to level `k`.
pub fn histogram256(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[quantize(v) as usize] += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Dimension(format!(
                "{} channel bytes for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: rgb.repeat(width * height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} flags for a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width + col] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground positions in raster order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// White foreground on black, for stage dumps.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl Rect {
    pub fn new(row_min: usize, row_max: usize, col_min: usize, col_max: usize) -> Self {
        debug_assert!(row_min <= row_max && col_min <= col_max);
        Self {
            row_min,
            row_max,
            col_min,
            col_max,
        }
    }

    /// Square of side `2 * half + 1` centered on `(row, col)`; `None` if it leaves the image.
    pub fn centered(row: usize, col: usize, half: usize, width: usize, height: usize) -> Option<Self> {
        let r = Self {
            row_min: row.checked_sub(half)?,
            row_max: row + half,
            col_min: col.checked_sub(half)?,
            col_max: col + half,
        };
        r.fits(width, height).then_some(r)
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_valid(&self) -> bool {
        self.row_min <= self.row_max && self.col_min <= self.col_max
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.is_valid() && self.row_max < height && self.col_max < width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_min..=self.row_max).contains(&row) && (self.col_min..=self.col_max).contains(&col)
    }

    pub fn contains_point(&self, p: PointRC) -> bool {
        p.row >= self.row_min as f64
            && p.row <= self.row_max as f64
            && p.col >= self.col_min as f64
            && p.col <= self.col_max as f64
    }
}

/// Sub-pixel position, `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRC {
    pub row: f64,
    pub col: f64,
}

impl PointRC {
    pub fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn distance(&self, other: &PointRC) -> f64 {
        (self.row - other.row).hypot(self.col - other.col)
    }
}
