use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An inversion target is not reached on the validated domain.
    #[error("range error: target {target} exceeds f(domain_hint) = {max}")]
    Range { target: f64, max: f64 },

    /// A function or object failed class/consistency validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The integrator could not make progress.
    #[error("numerical error at t = {t}: {detail}")]
    Numerical { t: f64, detail: String },

    /// A search did not terminate within its horizon.
    #[error("horizon error: {0}")]
    Horizon(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Declared envelopes cannot explain sampled behaviour for any constant.
    #[error("envelope inconsistency: {0}")]
    EnvelopeInconsistency(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
