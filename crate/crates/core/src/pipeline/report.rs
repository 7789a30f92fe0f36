use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::raster::PointRC;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteCellEntry {
    pub row: f64,
    pub col: f64,
    pub radius: f64,
    pub votes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub white_count: usize,
    pub red_count: usize,
    pub white_cells: Vec<WhiteCellEntry>,
    pub red_centers: Vec<PointRC>,
    pub rejected_fake_regions: usize,
    pub stage_timings_ms: BTreeMap<String, f64>,
    pub config: PipelineConfig,
}

impl AnalysisReport {
    /// Pretty JSON with alphabetically ordered keys.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    /// Copy with every stage timing set to zero. Wall-clock timings are the
    /// only non-deterministic part of a report.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.stage_timings_ms.values_mut().for_each(|v| *v = 0.0);
        r
    }
}
