//! Blood smear analysis for grayscale microscope images.
//!
//! The pipeline low-pass filters the image in the frequency domain, equalizes
//! it, finds white-cell nuclei by thresholding, confirms each nucleus with a
//! fixed-radius circle Hough transform, removes the white cells and counts red
//! cells by weighted template matching.
//!
//! ```
//! use smearcount::{run_pipeline, synth_smear, PipelineConfig, SynthSpec};
//!
//! let spec = SynthSpec { width: 256, height: 256, n_red: 10, n_white: 1, ..SynthSpec::default() };
//! let (img, truth) = synth_smear(&spec).unwrap();
//! let out = run_pipeline(&img, &PipelineConfig::default()).unwrap();
//! assert_eq!(out.report.white_count, truth.white_count);
//! ```

// `!(x > 0.0)` style checks reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod edges;
pub mod error;
pub mod hough;
pub mod netpbm;
pub mod pipeline;
pub mod raster;
pub mod segmentation;
pub mod spectral;
pub mod template;
pub mod union_find;

pub use error::{Error, Result};
pub use pipeline::{
    run_pipeline, synth_smear, AnalysisReport, ClassOverlay, PipelineConfig, PipelineOutput, PixelClass, StageImage,
    SynthSpec, SynthTruth,
};
pub use raster::{BinaryMask, GrayImage, PointRC, Rect, RgbImage};
