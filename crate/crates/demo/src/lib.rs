//! Browser demo: generate a synthetic smear, explore the low-pass filter and
//! run the full analysis. Images cross into JavaScript as RGBA bytes ready
//! for `ImageData`.

use smearcount::pipeline::isolated_red_templates;
use smearcount::spectral::{butterworth_gain, dft2, lowpass_filter, spectrum_view, ButterworthParams};
use smearcount::{run_pipeline, synth_smear, GrayImage, PipelineConfig, RgbImage, SynthSpec, SynthTruth};
use wasm_bindgen::prelude::*;

const TEMPLATE_HALF: usize = 18;
const TEMPLATE_WEIGHTS: [f64; 5] = [1.0, 1.0, 1.2, 1.0, 1.2];

pub fn gray_rgba(img: &GrayImage) -> Vec<u8> {
    img.data()
        .iter()
        .flat_map(|&v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

pub fn rgb_rgba(img: &RgbImage) -> Vec<u8> {
    img.pixels().flat_map(|[r, g, b]| [r, g, b, 255]).collect()
}

/// Counts from one analysis next to the generator's truth.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Summary {
    pub white_count: usize,
    pub red_count: usize,
    pub rejected_fake_regions: usize,
    pub true_white: usize,
    pub true_red: usize,
    pub templates: usize,
    pub total_ms: f64,
}

#[wasm_bindgen]
pub struct Demo {
    spec: SynthSpec,
    image: GrayImage,
    truth: SynthTruth,
    overlay: Option<RgbImage>,
}

impl Demo {
    pub fn generate(spec: SynthSpec) -> smearcount::Result<Self> {
        let (image, truth) = synth_smear(&spec)?;
        Ok(Self {
            spec,
            image,
            truth,
            overlay: None,
        })
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    /// Config with the default parameters and up to five templates on
    /// isolated red cells of the scene.
    pub fn config(&self, min_vote_fraction: f64, threshold_quantile: f64) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            templates: isolated_red_templates(&self.spec, &self.truth, TEMPLATE_HALF, TEMPLATE_WEIGHTS.len()),
            ..PipelineConfig::default()
        };
        for (t, w) in cfg.templates.iter_mut().zip(TEMPLATE_WEIGHTS) {
            t.weight = w;
        }
        cfg.hough.min_vote_fraction = min_vote_fraction;
        cfg.peak.threshold_quantile = threshold_quantile;
        cfg
    }

    pub fn try_lowpass(&self, order: u32, cutoff: f64) -> smearcount::Result<GrayImage> {
        lowpass_filter(&self.image, &ButterworthParams { order, cutoff })
    }

    pub fn try_analyze(&mut self, min_vote_fraction: f64, threshold_quantile: f64) -> smearcount::Result<Summary> {
        let cfg = self.config(min_vote_fraction, threshold_quantile);
        let out = run_pipeline(&self.image, &cfg)?;
        self.overlay = Some(out.overlay_image());
        Ok(Summary {
            white_count: out.report.white_count,
            red_count: out.report.red_count,
            rejected_fake_regions: out.report.rejected_fake_regions,
            true_white: self.truth.white_count,
            true_red: self.truth.red_count,
            templates: cfg.templates.len(),
            total_ms: out.report.stage_timings_ms.values().sum(),
        })
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Generates a scene; the remaining scene settings keep their defaults.
    #[wasm_bindgen(constructor)]
    pub fn new(
        size: usize,
        n_white: usize,
        n_red: usize,
        n_smudges: usize,
        noise_amplitude: f64,
        seed: u64,
    ) -> Result<Demo, JsError> {
        let spec = SynthSpec {
            width: size,
            height: size,
            n_white,
            n_red,
            n_smudges,
            noise_amplitude,
            rng_seed: seed,
            ..SynthSpec::default()
        };
        Demo::generate(spec).map_err(js_err)
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn original_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.image)
    }

    /// Log-magnitude spectrum, DC at the center.
    pub fn spectrum_rgba(&self) -> Vec<u8> {
        gray_rgba(&spectrum_view(&dft2(&self.image)))
    }

    pub fn lowpass_rgba(&self, order: u32, cutoff: f64) -> Result<Vec<u8>, JsError> {
        self.try_lowpass(order, cutoff)
            .map(|img| gray_rgba(&img))
            .map_err(js_err)
    }

    /// Runs the whole pipeline and returns the summary as JSON. The overlay
    /// is then available from `overlay_rgba`.
    pub fn analyze(&mut self, min_vote_fraction: f64, threshold_quantile: f64) -> Result<String, JsError> {
        let summary = self
            .try_analyze(min_vote_fraction, threshold_quantile)
            .map_err(js_err)?;
        serde_json::to_string(&summary).map_err(js_err)
    }

    pub fn overlay_rgba(&self) -> Option<Vec<u8>> {
        self.overlay.as_ref().map(rgb_rgba)
    }
}

/// Butterworth gain at `samples` evenly spaced radii over [0, 0.5].
#[wasm_bindgen]
pub fn butterworth_curve(order: u32, cutoff: f64, samples: usize) -> Vec<f64> {
    let p = ButterworthParams { order, cutoff };
    let n = samples.max(2);
    (0..n)
        .map(|i| butterworth_gain(0.5 * i as f64 / (n - 1) as f64, &p))
        .collect()
}
