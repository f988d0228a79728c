use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor argument or configuration value is out of range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Target energy per nat is below the wideband minimum for this model.
    #[error(
        "below minimum energy per nat: exponent undefined (outage probability -> 1); \
         eta = {eta}, minimum = {eta_bar}"
    )]
    BelowMinimumEnergy { eta: f64, eta_bar: f64 },

    /// The log-MGF was queried outside the region where it is finite.
    #[error("lambda = {lambda} is outside the log-MGF domain (must be < {bound})")]
    MgfDomain { lambda: f64, bound: f64 },

    #[error("no closed form for {0}; use exponent_numeric")]
    NoClosedForm(&'static str),

    #[error("tilting not available for {0}; use plain sampling")]
    TiltingUnavailable(&'static str),

    /// No trace-one PSD input covariance reaches the requested energy per nat.
    #[error("no sigma attains eta_bar <= eta for this psi (eta = {eta}, best eta_bar = {best})")]
    Infeasible { eta: f64, best: f64 },

    #[error("insufficient data: {valid} valid estimates, need at least {needed}; increase trials or use the tilted sampler")]
    InsufficientData { valid: usize, needed: usize },

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("descriptor parse error{}: {message}", at_path(path))]
    Descriptor { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that are consequences of the requested operating point
    /// (rather than malformed input).
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::BelowMinimumEnergy { .. } | Error::Infeasible { .. } | Error::MgfDomain { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn at_path(path: &str) -> String {
    if path.is_empty() || path == "." {
        String::new()
    } else {
        format!(" at `{path}`")
    }
}
