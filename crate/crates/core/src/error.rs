use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("netpbm parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rectangle {rect:?} does not fit inside a {width}x{height} image")]
    OutOfBounds {
        rect: crate::raster::Rect,
        width: usize,
        height: usize,
    },

    #[error("inverse transform left an imaginary residue of {max_imag:e}")]
    NumericConsistency { max_imag: f64 },

    #[error("histogram has no occupied bins")]
    EmptyHistogram,

    #[error("template {id:?} has zero variance")]
    DegenerateTemplate { id: String },

    #[error("white-cell discs cover the whole image; no fill value available")]
    DegenerateFill,

    #[error("cannot place {requested} cells without overlap (placed {placed})")]
    InfeasiblePacking { requested: usize, placed: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn parse(offset: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            reason: reason.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Name of the pipeline stage that failed, if the error came out of `run_pipeline`.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
