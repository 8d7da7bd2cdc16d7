use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The explicit forward step would create negative probabilities.
    #[error("grid step too coarse: delta * (arrival rate + mu) = {0} >= 1")]
    StepTooCoarse(f64),

    #[error(
        "no interior arrivals: the arrival interval would start at {t_a} beyond horizon {horizon}"
    )]
    NoInteriorArrivals { t_a: f64, horizon: f64 },

    #[error("closing time {closing_time} is too early for interior arrivals (needs > {threshold}); everyone arrives at time zero")]
    ClosingTimeTooEarly { closing_time: f64, threshold: f64 },

    #[error("bisection did not converge after {iterations} iterations (bracket width {width})")]
    NonConvergence { iterations: usize, width: f64 },

    #[error("time {0} is outside the propagated range")]
    TimeOutOfRange(f64),

    #[error("covariance needs s <= t, got s = {s}, t = {t}")]
    UnorderedTimes { s: f64, t: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid sampling schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("pair estimate needs two distinct times, got {0} twice")]
    CoincidentTimes(f64),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
