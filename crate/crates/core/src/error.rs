use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The implicit trapezoid step coefficient was not positive.
    #[error("singular solver step at t = {time} min (coefficient {coefficient})")]
    SingularStep { time: f64, coefficient: f64 },

    #[error("negative activity {value} in frame {frame}")]
    NegativeActivity { frame: usize, value: f64 },

    #[error("smoothing spline fit degenerated to interpolation")]
    DegenerateFit,

    #[error("summary kind mismatch: {0}")]
    KindMismatch(String),

    #[error("missing summary context: {0}")]
    MissingContext(String),

    #[error("weighted Gram matrix is rank deficient (condition {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("no timing in the basis library produced a valid fit")]
    NoValidFit,

    #[error("posterior is empty")]
    EmptyPosterior,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularStep { .. }
                | Error::DegenerateFit
                | Error::RankDeficient { .. }
                | Error::NoValidFit
                | Error::EmptyPosterior
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
