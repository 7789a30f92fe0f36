use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::run::{run_pipeline, StageImage};
use crate::error::{Error, Result};
use crate::raster::{GrayImage, PointRC};
use crate::template::{correlation_maps, extract_templates, score_weights, tune_weights, PeakSearch, WeightScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub weights: Vec<f64>,
    pub red_count: usize,
    pub score: WeightScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best_weights: Vec<f64>,
    pub best_score: WeightScore,
    pub truth_count: usize,
    pub entries: Vec<GridEntry>,
}

/// Runs the pipeline once with `cfg`, then scores every weight vector of
/// `grid` on the red-only image against the true red-cell centers.
pub fn tune_template_weights(
    img: &GrayImage,
    cfg: &PipelineConfig,
    truth: &[PointRC],
    grid: &[Vec<f64>],
) -> Result<TuneReport> {
    if cfg.templates.is_empty() {
        return Err(Error::InvalidConfig("tuning needs at least one template".into()));
    }
    if let Some(bad) = grid.iter().find(|w| w.len() != cfg.templates.len()) {
        return Err(Error::InvalidConfig(format!(
            "grid entry has {} weights for {} templates",
            bad.len(),
            cfg.templates.len()
        )));
    }
    let out = run_pipeline(img, cfg)?;
    let Some(StageImage::Gray(red_only)) = out.artifacts.get("red_only") else {
        unreachable!("run_pipeline always stores a gray red_only image")
    };
    let templates = extract_templates(red_only, &cfg.templates)?;
    let maps = correlation_maps(red_only, &templates)?;
    let search = PeakSearch::new(&cfg.peak, &templates, cfg.margin_px);

    let entries = grid
        .iter()
        .map(|weights| {
            let (score, peaks) = score_weights(&maps, weights, truth, &search)?;
            Ok(GridEntry {
                weights: weights.clone(),
                red_count: peaks.len(),
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (best_weights, best_score) = tune_weights(&maps, truth, grid, &search)?;
    Ok(TuneReport {
        best_weights,
        best_score,
        truth_count: truth.len(),
        entries,
    })
}
