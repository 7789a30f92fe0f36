//! End-to-end analysis: configuration, orchestration, overlay, report and
//! synthetic test scenes.

pub mod config;
pub mod overlay;
pub mod report;
pub mod run;
pub mod synth;
pub mod tune;

pub use config::PipelineConfig;
pub use overlay::{classify_pixels, render_overlay, ClassOverlay, PixelClass};
pub use report::{AnalysisReport, WhiteCellEntry};
pub use run::{run_pipeline, PipelineOutput, StageImage};
pub use synth::{isolated_red_templates, synth_smear, SynthSpec, SynthTruth};
pub use tune::{tune_template_weights, GridEntry, TuneReport};
