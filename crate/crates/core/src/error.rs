use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("misaligned step: {0}")]
    MisalignedStep(String),
    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },
    #[error("control value {value:?} at index {index} is outside the control range")]
    ControlOutsideOmega { index: usize, value: Vec<f64> },
    #[error("singular delay matrix A_p")]
    SingularAp,
    #[error("system is not hyperbolic")]
    NotHyperbolic,
    #[error("control window too short: {0}")]
    InsufficientWindow(String),
    #[error("ambiguous grouping: levels {0} and {1} are closer than twice the grouping tolerance")]
    AmbiguousGrouping(f64, f64),
    #[error("0 is not in the control range")]
    ZeroNotInOmega,
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("resolution refusal: {0}")]
    Resolution(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
