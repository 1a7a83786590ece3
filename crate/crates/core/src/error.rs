use alloc::string::String;

/// Errors produced by the editing engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("region is empty")]
    EmptyRegion,

    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),

    #[error("coordinate ({x}, {y}) outside {width}x{height} bounds")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schedule inconsistency: 1 - alpha_bar({t}) - sigma^2 = {residual} < 0 for step {s} -> {t}")]
    ScheduleInconsistency { s: u32, t: u32, residual: f64 },

    #[error("merged mapping is empty")]
    EmptyMapping,

    #[error("backend '{backend}' failed: {message}")]
    Backend { backend: String, message: String },

    #[error("{stage} failed at timestep {timestep}: {source}")]
    Trajectory {
        stage: &'static str,
        timestep: u32,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    /// Short name of the pipeline stage that failed, when known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Trajectory { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// True for errors caused by unusable region geometry rather than bad
    /// input encoding or a runtime failure.
    pub fn is_degenerate_region(&self) -> bool {
        matches!(
            self,
            Error::EmptyRegion
                | Error::TooFewVertices(_)
                | Error::DegenerateGeometry(_)
                | Error::EmptyMapping
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
