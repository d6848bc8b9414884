use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model has no kernels")]
    ModelEmpty,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported PGM depth: maxval {0} (only 255 is supported)")]
    UnsupportedDepth(u32),

    #[error("invalid Canny thresholds: low {low}, high {high}")]
    InvalidThresholds { low: f64, high: f64 },

    #[error("edge mask yields no line segments")]
    EmptyEdgeMask,

    #[error("kernel {index} center ({x}, {y}) lies outside the image")]
    CenterOutOfBounds { index: usize, x: f64, y: f64 },

    #[error("tile size {0} is below the minimum of 8 px")]
    TileTooSmall(usize),

    #[error("tiles do not cover the frame exactly: {0}")]
    CoverageGap(String),

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("image {width}x{height} is too small for an 11x11 SSIM window")]
    ImageTooSmall { width: usize, height: usize },

    #[error("could not decode image: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
