use serde::{Deserialize, Serialize};

use crate::edges::CannyParams;
use crate::error::{Error, Result};
use crate::hough::HoughParams;
use crate::spectral::ButterworthParams;
use crate::template::{PeakParams, TemplateSpec};

fn default_merge_dist() -> f64 {
    60.0
}

fn default_margin() -> usize {
    8
}

fn default_nucleus_fraction() -> f64 {
    0.05
}

fn default_nucleus_gap() -> f64 {
    16.0
}

/// Every tunable of the pipeline. Missing JSON keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub butterworth: ButterworthParams,
    #[serde(default)]
    pub canny: CannyParams,
    #[serde(default)]
    pub hough: HoughParams,
    #[serde(default = "default_merge_dist")]
    pub merge_dist_px: f64,
    #[serde(default = "default_margin")]
    pub margin_px: usize,
    /// Upper bound on the share of pixels the nucleus threshold may select.
    /// Red cells alone can cover a tenth of a sparse smear.
    #[serde(default = "default_nucleus_fraction")]
    pub nucleus_max_fraction: f64,
    /// Minimum distance, in gray levels of the low-passed image, between the
    /// nucleus class mean and the class above it. Smears without nuclei only
    /// have a smooth red-cell lump there, which splits with a gap of a level
    /// or two.
    #[serde(default = "default_nucleus_gap")]
    pub nucleus_min_gap: f64,
    #[serde(default)]
    pub peak: PeakParams,
    /// Radius painted around each red center in the overlay; defaults to
    /// 0.4 of the mean template side.
    #[serde(default)]
    pub red_radius_px: Option<f64>,
    #[serde(default)]
    pub templates: Vec<TemplateSpec>,
    #[serde(default)]
    pub stage_dump: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            butterworth: ButterworthParams::default(),
            canny: CannyParams::default(),
            hough: HoughParams::default(),
            merge_dist_px: default_merge_dist(),
            margin_px: default_margin(),
            nucleus_max_fraction: default_nucleus_fraction(),
            nucleus_min_gap: default_nucleus_gap(),
            peak: PeakParams::default(),
            red_radius_px: None,
            templates: Vec::new(),
            stage_dump: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Pretty JSON with alphabetically ordered keys.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.butterworth.validate()?;
        self.canny.validate()?;
        self.hough.validate()?;
        self.peak.validate()?;
        if !(self.merge_dist_px > 0.0) {
            return Err(Error::InvalidConfig("merge_dist_px must be positive".into()));
        }
        if !(self.nucleus_max_fraction > 0.0 && self.nucleus_max_fraction <= 1.0) {
            return Err(Error::InvalidConfig("nucleus_max_fraction must be in (0, 1]".into()));
        }
        if !(self.nucleus_min_gap >= 0.0 && self.nucleus_min_gap <= 255.0) {
            return Err(Error::InvalidConfig("nucleus_min_gap must be in [0, 255]".into()));
        }
        if let Some(r) = self.red_radius_px {
            if !(r > 0.0) {
                return Err(Error::InvalidConfig("red_radius_px must be positive".into()));
            }
        }
        for t in &self.templates {
            if !t.rect.is_valid() {
                return Err(Error::InvalidConfig(format!(
                    "template {:?} has an inverted rect",
                    t.id
                )));
            }
            if !(t.weight > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "template {:?} needs a positive weight",
                    t.id
                )));
            }
        }
        Ok(())
    }

    pub fn red_radius(&self) -> f64 {
        self.red_radius_px.unwrap_or_else(|| {
            if self.templates.is_empty() {
                return 0.0;
            }
            let mean_side = self
                .templates
                .iter()
                .map(|t| t.rect.width().min(t.rect.height()) as f64)
                .sum::<f64>()
                / self.templates.len() as f64;
            0.4 * mean_side
        })
    }
}
