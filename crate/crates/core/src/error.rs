use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),

    #[error("image {width}x{height} is smaller than the required {min_width}x{min_height}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("singular or degenerate homography")]
    SingularHomography,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough data: need {needed}, have {available}")]
    NotEnoughData { needed: usize, available: usize },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("registration failed: {0}")]
    RegistrationFailed(String),

    #[error("patch spec leaves the valid region: {0}")]
    OutOfBounds(String),

    #[error(
        "sampling budget exhausted after {attempts} attempts ({accepted} of {requested} accepted)"
    )]
    SamplingExhausted {
        attempts: usize,
        accepted: usize,
        requested: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
