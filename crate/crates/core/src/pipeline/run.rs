use std::collections::BTreeMap;
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
use std::time::Instant;

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
use web_time::Instant;

use super::config::PipelineConfig;
use super::overlay::{classify_pixels, render_overlay, ClassOverlay};
use super::report::{AnalysisReport, WhiteCellEntry};
use crate::edges::canny;
use crate::error::{Error, Result};
use crate::hough::{detect_white_cells, disc_mask, fill_masked, WhiteCell};
use crate::netpbm::{save_pgm, save_ppm};
use crate::raster::{histogram256, BinaryMask, GrayImage, PointRC, RgbImage};
use crate::segmentation::{
    binarize_dark, dark_class_level, label_8conn, merge_nuclei, search_window, LabelMap, NucleusGroup,
};
use crate::spectral::{dft2, equalize_histogram, lowpass_filter, spectrum_view};
use crate::template::{count_red_cells, extract_templates, PeakSearch};

/// Rejected regions are grown by this much before blanking, to cover their
/// blurred rims.
const FAKE_REGION_GROW_PX: usize = 5;

/// Intermediate image kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub enum StageImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl StageImage {
    pub fn extension(&self) -> &'static str {
        match self {
            StageImage::Gray(_) => "pgm",
            StageImage::Rgb(_) => "ppm",
        }
    }

    pub fn content_type(&self) -> &'static str {
        match self {
            StageImage::Gray(_) => "image/x-portable-graymap",
            StageImage::Rgb(_) => "image/x-portable-pixmap",
        }
    }

    /// Binary PGM or PPM bytes.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            StageImage::Gray(img) => save_pgm(img),
            StageImage::Rgb(img) => save_ppm(img),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: AnalysisReport,
    pub overlay: ClassOverlay,
    pub white_cells: Vec<WhiteCell>,
    /// Nucleus groups the circle search rejected.
    pub fake_regions: Vec<NucleusGroup>,
    /// Stage images keyed by stage name (`filtered`, `res_<id>`, ...).
    pub artifacts: BTreeMap<String, StageImage>,
}

impl PipelineOutput {
    pub fn overlay_image(&self) -> RgbImage {
        render_overlay(&self.overlay)
    }
}

/// Pixels of the rejected groups' regions, grown by `grow` (square neighbourhood).
fn fake_region_mask(labels: &LabelMap, groups: &[NucleusGroup], rejected: &[u32], grow: usize) -> BinaryMask {
    let (w, h) = (labels.width, labels.height);
    let mut fake_label = vec![false; labels.data.iter().copied().max().unwrap_or(0) as usize + 1];
    for g in groups.iter().filter(|g| rejected.contains(&g.group_id)) {
        for &l in &g.member_labels {
            fake_label[l as usize] = true;
        }
    }
    let mut mask = BinaryMask::empty(w, h);
    for r in 0..h {
        for c in 0..w {
            if fake_label[labels.get(r, c) as usize] {
                for rr in r.saturating_sub(grow)..=(r + grow).min(h - 1) {
                    for cc in c.saturating_sub(grow)..=(c + grow).min(w - 1) {
                        mask.set(rr, cc, true);
                    }
                }
            }
        }
    }
    mask
}

struct Timer {
    timings: BTreeMap<String, f64>,
}

impl Timer {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(name))?;
        self.timings
            .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        Ok(out)
    }
}

/// Runs the full analysis on one image.
///
/// Red-cell counting is skipped (count 0) when the config has no templates.
pub fn run_pipeline(img: &GrayImage, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    if img.is_empty() {
        return Err(Error::Dimension("empty image".into()).in_stage("input"));
    }
    for t in &cfg.templates {
        if !t.rect.fits(img.width(), img.height()) {
            return Err(Error::OutOfBounds {
                rect: t.rect,
                width: img.width(),
                height: img.height(),
            }
            .in_stage("config"));
        }
    }

    let (w, h) = (img.width(), img.height());
    let mut timer = Timer {
        timings: BTreeMap::new(),
    };
    let mut artifacts = BTreeMap::new();

    let (spectrum, filtered) = timer.stage("lowpass", || {
        let view = spectrum_view(&dft2(img));
        Ok((view, lowpass_filter(img, &cfg.butterworth)?))
    })?;
    let equalized = timer.stage("equalize", || Ok(equalize_histogram(&filtered)))?;

    // Otsu needs the gap between nucleus and red-cell intensities, which
    // equalization flattens away, so the threshold reads the low-passed image.
    let nucleus_mask = timer.stage("threshold", || {
        Ok(
            match dark_class_level(&histogram256(&filtered), cfg.nucleus_max_fraction, cfg.nucleus_min_gap) {
                Some(level) => binarize_dark(&filtered, level),
                None => BinaryMask::empty(w, h),
            },
        )
    })?;

    let (labels, groups) = timer.stage("label_merge", || {
        let (labels, regions) = label_8conn(&nucleus_mask, cfg.margin_px);
        let mut groups = merge_nuclei(&regions, cfg.merge_dist_px);
        for g in &mut groups {
            g.search_window = search_window(g, cfg.hough.radius, img.bounds());
        }
        Ok((labels, groups))
    })?;

    let edges = timer.stage("canny", || Ok(canny(&equalized, &cfg.canny)))?;
    let (white_cells, rejected) = timer.stage("hough", || Ok(detect_white_cells(&groups, &edges, &cfg.hough)))?;
    // Rejected fake regions are dark blobs that would otherwise match red
    // templates; they are blanked together with the white cells.
    let red_only = timer.stage("removal", || {
        let fake = fake_region_mask(&labels, &groups, &rejected, FAKE_REGION_GROW_PX);
        let discs = disc_mask(&white_cells, w, h);
        let blank = BinaryMask::from_fn(w, h, |r, c| discs.get(r, c) || fake.get(r, c));
        if blank.count() == 0 {
            Ok(equalized.clone())
        } else {
            fill_masked(&equalized, &blank)
        }
    })?;

    let mut red_centers: Vec<PointRC> = Vec::new();
    if !cfg.templates.is_empty() {
        let counted = timer.stage("templates", || {
            let templates = extract_templates(&red_only, &cfg.templates)?;
            count_red_cells(
                &red_only,
                &templates,
                &PeakSearch::new(&cfg.peak, &templates, cfg.margin_px),
            )
        })?;
        red_centers = counted.centers();
        for (spec, map) in cfg.templates.iter().zip(&counted.maps) {
            artifacts.insert(format!("res_{}", spec.id), StageImage::Gray(map.to_image()));
        }
        artifacts.insert(
            "res_combined".to_string(),
            StageImage::Gray(counted.combined.to_image()),
        );
    }

    let overlay = timer.stage("overlay", || {
        Ok(classify_pixels(
            &white_cells,
            &nucleus_mask,
            &red_centers,
            cfg.red_radius(),
        ))
    })?;

    artifacts.insert("spectrum".to_string(), StageImage::Gray(spectrum));
    artifacts.insert("filtered".to_string(), StageImage::Gray(filtered));
    artifacts.insert("equalized".to_string(), StageImage::Gray(equalized));
    artifacts.insert("binary".to_string(), StageImage::Gray(nucleus_mask.to_gray()));
    artifacts.insert("edges".to_string(), StageImage::Gray(edges.to_gray()));
    artifacts.insert("red_only".to_string(), StageImage::Gray(red_only));
    artifacts.insert("overlay".to_string(), StageImage::Rgb(render_overlay(&overlay)));

    let report = AnalysisReport {
        white_count: white_cells.len(),
        red_count: red_centers.len(),
        white_cells: white_cells
            .iter()
            .map(|c| WhiteCellEntry {
                row: c.center.row,
                col: c.center.col,
                radius: c.radius,
                votes: c.votes,
            })
            .collect(),
        red_centers,
        rejected_fake_regions: rejected.len(),
        stage_timings_ms: timer.timings,
        config: cfg.clone(),
    };
    let fake_regions = groups.into_iter().filter(|g| rejected.contains(&g.group_id)).collect();
    Ok(PipelineOutput {
        report,
        overlay,
        white_cells,
        fake_regions,
        artifacts,
    })
}
