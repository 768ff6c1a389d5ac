use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel table has no entry for ({k}, {l}); it covers sizes up to {max}")]
    OutOfTableRange { k: usize, l: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state is absorbing, no event can occur")]
    Absorbed,

    #[error("exchange from size {donor} to size {recipient} is not possible: {reason}")]
    InvalidExchange {
        donor: usize,
        recipient: usize,
        reason: &'static str,
    },

    #[error("reference engine is limited to {max} sites, got {got}")]
    SystemTooLarge { max: usize, got: usize },

    #[error("no site of size {0} to place the tagged particle on")]
    NoSiteOfSize(usize),

    #[error("thinning envelope {envelope} is below the chain rate {rate} at t = {t}")]
    EnvelopeViolation { envelope: f64, rate: f64, t: f64 },

    #[error("invalid initial profile: {0}")]
    InvalidInitial(String),

    #[error("negative density {value:e} at k = {k} (t = {t}); step size control failed")]
    Negativity { k: usize, value: f64, t: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("insufficient dynamic range: {0}")]
    InsufficientRange(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
