use thiserror::Error;

/// Errors raised by the modelling, simulation and relay layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter violates its invariant (sign, range or ordering).
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// The scenario text could not be parsed or failed validation.
    #[error("{}", format_parse(*line, field.as_deref(), message))]
    Parse {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },

    /// The two inverse-Laplace methods disagree beyond tolerance.
    #[error(
        "inverse Laplace methods disagree: max relative discrepancy {max_discrepancy:.3e} exceeds {tolerance:.3e}"
    )]
    NumericalInstability {
        max_discrepancy: f64,
        tolerance: f64,
        stehfest: Vec<f64>,
        talbot: Vec<f64>,
    },

    /// The time integration produced a non-finite state.
    #[error("solver diverged after t = {last_valid_time:.6e} s")]
    SolverDivergence { last_valid_time: f64 },

    /// The network could not be assembled into a state-space model.
    #[error("network build failed: {0}")]
    Build(String),

    /// A signal-processing precondition failed.
    #[error("signal error: {0}")]
    Signal(String),

    /// The requested fault kind has no meaning for the operation.
    #[error("unsupported fault kind `{0}` for this operation")]
    UnsupportedKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_parse(line: Option<usize>, field: Option<&str>, message: &str) -> String {
    match (line, field) {
        (Some(l), Some(f)) => format!("scenario line {l}, field `{f}`: {message}"),
        (None, Some(f)) => format!("scenario field `{f}`: {message}"),
        (Some(l), None) => format!("scenario line {l}: {message}"),
        (None, None) => format!("scenario: {message}"),
    }
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
