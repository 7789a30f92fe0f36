//! Red-cell counting by template matching.
//!
//! Each operator-selected template is correlated with the red-only image using
//! zero-mean normalized cross-correlation. The per-template maps are combined
//! with operator weights; every red cell then shows up as a peak area that is
//! thresholded, shrunk to its local maximum and reduced to a mean position.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::edges::quantile;
use crate::error::{Error, Result};
use crate::raster::{GrayImage, PointRC, Rect};
use crate::segmentation::components_8;
use crate::spectral::fft2_in_place;

/// Per-pixel variance below which a window counts as flat.
const FLAT_VARIANCE: f64 = 1e-10;
/// Local-max shrink keeps pixels this close to the region maximum.
const PLATEAU_EPS: f64 = 1e-9;
/// Matching radius used when scoring weight vectors against ground truth.
pub const MATCH_RADIUS_PX: f64 = 10.0;

/// Template selection as it appears in the pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub id: String,
    pub rect: Rect,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub id: String,
    pub rect: Rect,
    pub weight: f64,
    pub patch: GrayImage,
}

fn variance(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Copies every template patch out of `img`.
pub fn extract_templates(img: &GrayImage, specs: &[TemplateSpec]) -> Result<Vec<Template>> {
    specs
        .iter()
        .map(|s| {
            if !(s.weight > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "template {:?} has non-positive weight {}",
                    s.id, s.weight
                )));
            }
            let patch = img.crop(s.rect)?;
            if variance(patch.data()) <= FLAT_VARIANCE {
                return Err(Error::DegenerateTemplate { id: s.id.clone() });
            }
            Ok(Template {
                id: s.id.clone(),
                rect: s.rect,
                weight: s.weight,
                patch,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl CorrelationMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Min-max normalized heatmap for display.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(self.width, self.height, self.data.clone())
            .expect("map dimensions are consistent")
            .normalized()
    }
}

/// Summed-area table with a zero top row and left column.
struct Integral {
    width: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Integral {
    fn new(data: &[f64], width: usize, height: usize) -> Self {
        let stride = width + 1;
        let mut sum = vec![0.0; stride * (height + 1)];
        let mut sum_sq = vec![0.0; stride * (height + 1)];
        for r in 0..height {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for c in 0..width {
                let v = data[r * width + c];
                row += v;
                row_sq += v * v;
                let i = (r + 1) * stride + c + 1;
                sum[i] = sum[i - stride] + row;
                sum_sq[i] = sum_sq[i - stride] + row_sq;
            }
        }
        Self { width, sum, sum_sq }
    }

    /// Sum and sum of squares over rows `r0..r1`, cols `c0..c1` (exclusive ends).
    fn rect(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> (f64, f64) {
        let s = self.width + 1;
        let pick = |t: &[f64]| t[r1 * s + c1] - t[r0 * s + c1] - t[r1 * s + c0] + t[r0 * s + c0];
        (pick(&self.sum), pick(&self.sum_sq))
    }
}

/// Smallest `n >= len` with no prime factors above 5.
fn fast_len(len: usize) -> usize {
    (len..)
        .find(|&n| {
            let mut m = n;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("unbounded search")
}

/// Precomputed image-side state, shared by all templates matched against one image.
pub struct Matcher {
    width: usize,
    height: usize,
    pad_w: usize,
    pad_h: usize,
    spectrum: Vec<Complex64>,
    integral: Integral,
}

impl Matcher {
    pub fn new(img: &GrayImage, max_template_w: usize, max_template_h: usize) -> Self {
        let (w, h) = (img.width(), img.height());
        let mean = img.data().iter().sum::<f64>() / img.len() as f64;
        let centered: Vec<f64> = img.data().iter().map(|v| v - mean).collect();
        let pad_w = fast_len(w + max_template_w.max(1) - 1);
        let pad_h = fast_len(h + max_template_h.max(1) - 1);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); pad_w * pad_h];
        for r in 0..h {
            for c in 0..w {
                spectrum[r * pad_w + c].re = centered[r * w + c];
            }
        }
        fft2_in_place(&mut spectrum, pad_w, pad_h, false);
        Self {
            width: w,
            height: h,
            pad_w,
            pad_h,
            spectrum,
            integral: Integral::new(&centered, w, h),
        }
    }

    /// Zero-mean NCC of `patch`, anchored at the patch center, same size as the image.
    pub fn ncc(&self, patch: &GrayImage) -> Result<CorrelationMap> {
        let (tw, th) = (patch.width(), patch.height());
        if tw >= self.width || th >= self.height {
            return Err(Error::Dimension(format!(
                "template {tw}x{th} is not smaller than image {}x{}",
                self.width, self.height
            )));
        }
        if self.pad_w < self.width + tw - 1 || self.pad_h < self.height + th - 1 {
            return Err(Error::Dimension(format!(
                "template {tw}x{th} exceeds the matcher's padding"
            )));
        }
        let t_mean = patch.data().iter().sum::<f64>() / patch.len() as f64;
        let t_centered: Vec<f64> = patch.data().iter().map(|v| v - t_mean).collect();
        let t_integral = Integral::new(&t_centered, tw, th);

        // Circular cross-correlation: IFFT(F(I) * conj(F(T))).
        let (pw, ph) = (self.pad_w, self.pad_h);
        let mut tspec = vec![Complex64::new(0.0, 0.0); pw * ph];
        for r in 0..th {
            for c in 0..tw {
                tspec[r * pw + c].re = t_centered[r * tw + c];
            }
        }
        fft2_in_place(&mut tspec, pw, ph, false);
        for (t, i) in tspec.iter_mut().zip(&self.spectrum) {
            *t = i * t.conj();
        }
        fft2_in_place(&mut tspec, pw, ph, true);
        let scale = 1.0 / (pw * ph) as f64;

        let (ah, aw) = (th / 2, tw / 2);
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; w * h];
        for r in 0..h {
            // Window top-left in image coordinates may be negative.
            let top = r as isize - ah as isize;
            let ir0 = top.max(0) as usize;
            let ir1 = ((top + th as isize) as usize).min(h);
            let tr0 = (ir0 as isize - top) as usize;
            let tr1 = tr0 + (ir1 - ir0);
            let yr = top.rem_euclid(ph as isize) as usize;
            for c in 0..w {
                let left = c as isize - aw as isize;
                let ic0 = left.max(0) as usize;
                let ic1 = ((left + tw as isize) as usize).min(w);
                let tc0 = (ic0 as isize - left) as usize;
                let tc1 = tc0 + (ic1 - ic0);
                let n = ((ir1 - ir0) * (ic1 - ic0)) as f64;

                let (si, si2) = self.integral.rect(ir0, ir1, ic0, ic1);
                let (st, st2) = t_integral.rect(tr0, tr1, tc0, tc1);
                let var_i = si2 - si * si / n;
                let var_t = st2 - st * st / n;
                if var_i <= FLAT_VARIANCE * n || var_t <= FLAT_VARIANCE * n {
                    continue;
                }
                let xc = left.rem_euclid(pw as isize) as usize;
                let sit = tspec[yr * pw + xc].re * scale;
                let num = sit - si * st / n;
                out[r * w + c] = (num / (var_i * var_t).sqrt()).clamp(-1.0, 1.0);
            }
        }
        Ok(CorrelationMap {
            width: w,
            height: h,
            data: out,
        })
    }
}

/// Zero-mean normalized cross-correlation map of one template.
///
/// Scores are computed over the valid overlap of template and image, so border
/// positions stay in `[-1, 1]`; flat windows score 0.
pub fn ncc_map(img: &GrayImage, t: &Template) -> Result<CorrelationMap> {
    Matcher::new(img, t.patch.width(), t.patch.height()).ncc(&t.patch)
}

/// Pixelwise weighted sum of correlation maps.
pub fn combine_maps(maps: &[CorrelationMap], weights: &[f64]) -> Result<CorrelationMap> {
    if maps.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} maps but {} weights",
            maps.len(),
            weights.len()
        )));
    }
    let first = maps
        .first()
        .ok_or_else(|| Error::Dimension("no correlation maps to combine".into()))?;
    let mut out = CorrelationMap::zeros(first.width, first.height);
    for (m, &wgt) in maps.iter().zip(weights) {
        if (m.width, m.height) != (first.width, first.height) {
            return Err(Error::Dimension(format!(
                "map {}x{} differs from {}x{}",
                m.width, m.height, first.width, first.height
            )));
        }
        for (o, v) in out.data.iter_mut().zip(&m.data) {
            *o += wgt * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakParams {
    pub threshold_quantile: f64,
    /// Peaks closer than this merge; `None` means half the widest template.
    #[serde(default)]
    pub min_peak_separation: Option<f64>,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            threshold_quantile: 0.95,
            min_peak_separation: None,
        }
    }
}

impl PeakParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            return Err(Error::InvalidConfig("peak threshold_quantile must be in (0, 1)".into()));
        }
        if let Some(s) = self.min_peak_separation {
            if !(s >= 1.0) {
                return Err(Error::InvalidConfig("peak min_peak_separation must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn separation_for(&self, templates: &[Template]) -> f64 {
        self.min_peak_separation.unwrap_or_else(|| {
            let widest = templates.iter().map(|t| t.patch.width()).max().unwrap_or(2);
            (widest as f64 / 2.0).max(1.0)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: PointRC,
    pub score: f64,
}

/// Mean positions of shrunken peak areas, before separation merging.
///
/// Pixels at or above the quantile threshold form 8-connected areas; each area
/// keeps only the pixels at its maximum; those are relabeled and averaged. An
/// area spanning the whole map is degenerate and dropped.
pub fn raw_peaks(map: &CorrelationMap, threshold_quantile: f64) -> Vec<Peak> {
    let (w, h) = (map.width, map.height);
    if map.data.is_empty() {
        return Vec::new();
    }
    let mut values = map.data.clone();
    let threshold = quantile(&mut values, threshold_quantile);
    let (areas, n_areas) = components_8(w, h, |i| map.data[i] >= threshold);

    let mut area_max = vec![f64::NEG_INFINITY; n_areas];
    let mut area_size = vec![0usize; n_areas];
    for (i, &a) in areas.iter().enumerate() {
        if a > 0 {
            let k = a as usize - 1;
            area_max[k] = area_max[k].max(map.data[i]);
            area_size[k] += 1;
        }
    }
    let keep = |i: usize| {
        let a = areas[i];
        a > 0 && area_size[a as usize - 1] < w * h && map.data[i] >= area_max[a as usize - 1] - PLATEAU_EPS
    };
    let (sets, n_sets) = components_8(w, h, keep);

    let mut acc = vec![(0.0f64, 0.0f64, 0usize, f64::NEG_INFINITY); n_sets];
    for (i, &s) in sets.iter().enumerate() {
        if s > 0 {
            let e = &mut acc[s as usize - 1];
            e.0 += (i / w) as f64;
            e.1 += (i % w) as f64;
            e.2 += 1;
            e.3 = e.3.max(map.data[i]);
        }
    }
    acc.into_iter()
        .map(|(rs, cs, n, score)| Peak {
            center: PointRC::new(rs / n as f64, cs / n as f64),
            score,
        })
        .collect()
}

/// Merges peaks closer than `separation`: the higher score wins, equal scores
/// average their positions. Repeats until all pairs are far enough apart.
pub fn merge_close_peaks(mut peaks: Vec<Peak>, separation: f64) -> Vec<Peak> {
    loop {
        peaks.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.center.row.total_cmp(&b.center.row))
                .then(a.center.col.total_cmp(&b.center.col))
        });
        let mut kept: Vec<(Peak, usize)> = Vec::with_capacity(peaks.len());
        for p in &peaks {
            match kept.iter_mut().find(|(k, _)| k.center.distance(&p.center) < separation) {
                Some((k, n)) => {
                    if k.score == p.score {
                        let m = *n as f64;
                        k.center.row = (k.center.row * m + p.center.row) / (m + 1.0);
                        k.center.col = (k.center.col * m + p.center.col) / (m + 1.0);
                        *n += 1;
                    }
                }
                None => kept.push((*p, 1)),
            }
        }
        let merged: Vec<Peak> = kept.into_iter().map(|(p, _)| p).collect();
        let stable = merged.len() == peaks.len();
        peaks = merged;
        if stable {
            return peaks;
        }
    }
}

/// Peak extraction on a combined correlation map.
pub fn peak_regions(map: &CorrelationMap, threshold_quantile: f64, separation: f64) -> Vec<Peak> {
    let mut peaks = merge_close_peaks(raw_peaks(map, threshold_quantile), separation);
    peaks.sort_by(|a, b| {
        a.center
            .row
            .total_cmp(&b.center.row)
            .then(a.center.col.total_cmp(&b.center.col))
    });
    peaks
}

/// Peaks whose center lies within `margin` of the map border are dropped;
/// correlation there rests on a partial template overlap.
pub fn drop_border_peaks(peaks: Vec<Peak>, width: usize, height: usize, margin: usize) -> Vec<Peak> {
    let m = margin as f64;
    let (max_r, max_c) = ((height as f64 - 1.0) - m, (width as f64 - 1.0) - m);
    peaks
        .into_iter()
        .filter(|p| p.center.row >= m && p.center.col >= m && p.center.row <= max_r && p.center.col <= max_c)
        .collect()
}

/// Resolved peak-extraction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSearch {
    pub threshold_quantile: f64,
    pub separation: f64,
    pub border_margin: usize,
}

impl PeakSearch {
    pub fn new(p: &PeakParams, templates: &[Template], border_margin: usize) -> Self {
        Self {
            threshold_quantile: p.threshold_quantile,
            separation: p.separation_for(templates),
            border_margin,
        }
    }

    pub fn peaks(&self, map: &CorrelationMap) -> Vec<Peak> {
        let peaks = peak_regions(map, self.threshold_quantile, self.separation);
        drop_border_peaks(peaks, map.width, map.height, self.border_margin)
    }
}

/// Everything produced while counting red cells.
#[derive(Debug, Clone)]
pub struct RedCellCount {
    pub maps: Vec<CorrelationMap>,
    pub combined: CorrelationMap,
    pub peaks: Vec<Peak>,
}

impl RedCellCount {
    pub fn count(&self) -> usize {
        self.peaks.len()
    }

    pub fn centers(&self) -> Vec<PointRC> {
        self.peaks.iter().map(|p| p.center).collect()
    }
}

/// Correlation maps for every template against one image.
pub fn correlation_maps(img: &GrayImage, templates: &[Template]) -> Result<Vec<CorrelationMap>> {
    let max_w = templates.iter().map(|t| t.patch.width()).max().unwrap_or(1);
    let max_h = templates.iter().map(|t| t.patch.height()).max().unwrap_or(1);
    let matcher = Matcher::new(img, max_w, max_h);

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        templates.par_iter().map(|t| matcher.ncc(&t.patch)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    templates.iter().map(|t| matcher.ncc(&t.patch)).collect()
}

pub fn count_red_cells(img: &GrayImage, templates: &[Template], search: &PeakSearch) -> Result<RedCellCount> {
    if templates.is_empty() {
        return Err(Error::InvalidConfig(
            "red-cell counting needs at least one template".into(),
        ));
    }
    let maps = correlation_maps(img, templates)?;
    let weights: Vec<f64> = templates.iter().map(|t| t.weight).collect();
    let combined = combine_maps(&maps, &weights)?;
    let peaks = search.peaks(&combined);
    Ok(RedCellCount { maps, combined, peaks })
}

/// Greedy one-to-one matching within `radius`, closest pairs first.
/// Returns the number of matched pairs.
pub fn match_count(detected: &[PointRC], truth: &[PointRC], radius: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let dist = d.distance(t);
            if dist <= radius {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            matched += 1;
        }
    }
    matched
}

/// Score of one weight vector: count error, then unmatched centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeightScore {
    pub count_error: usize,
    pub unmatched: usize,
}

pub fn score_weights(
    maps: &[CorrelationMap],
    weights: &[f64],
    truth: &[PointRC],
    search: &PeakSearch,
) -> Result<(WeightScore, Vec<Peak>)> {
    let combined = combine_maps(maps, weights)?;
    let peaks = search.peaks(&combined);
    let centers: Vec<PointRC> = peaks.iter().map(|p| p.center).collect();
    let matched = match_count(&centers, truth, MATCH_RADIUS_PX);
    Ok((
        WeightScore {
            count_error: centers.len().abs_diff(truth.len()),
            unmatched: (centers.len() - matched) + (truth.len() - matched),
        },
        peaks,
    ))
}

/// Grid search over weight vectors; the first of equally good entries wins.
pub fn tune_weights(
    maps: &[CorrelationMap],
    truth: &[PointRC],
    grid: &[Vec<f64>],
    search: &PeakSearch,
) -> Result<(Vec<f64>, WeightScore)> {
    let mut best: Option<(usize, WeightScore)> = None;
    for (i, weights) in grid.iter().enumerate() {
        let (score, _) = score_weights(maps, weights, truth, search)?;
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((i, score));
        }
    }
    let (i, score) = best.ok_or_else(|| Error::InvalidConfig("empty weight grid".into()))?;
    Ok((grid[i].clone(), score))
}
