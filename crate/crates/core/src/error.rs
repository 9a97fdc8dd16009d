use thiserror::Error;

/// Failures raised by the numerical modules.
///
/// Every variant maps to a stable name through [`Error::name`]; the CLI
/// prints that name on stderr when a command fails numerically.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("density is not integrable: {0}")]
    NonIntegrable(String),
    #[error("x = {0} lies outside the support (0, inf)")]
    OutOfSupport(f64),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("envelope violated: {0}")]
    EnvelopeViolated(String),
    #[error("threshold not found: {0}")]
    ThresholdNotFound(String),
    #[error("moment generating function diverges at t = {t}")]
    Divergent { t: f64 },
    #[error("no tilt solves the mean equation for x = {x}")]
    NoRoot { x: f64 },
    #[error("importance weights degenerate: effective sample size {n_eff:.1} < 30")]
    DegenerateWeights { n_eff: f64 },
    #[error("retry budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("window k = {k} is out of range for a path of length {n}")]
    BadWindow { k: usize, n: usize },
    #[error("degenerate plan: {degenerate} of {rows} rows have H <= 0")]
    DegeneratePlan { degenerate: usize, rows: usize },
    #[error("target {target} not achievable: ratio at eps = 0.9a is {best}")]
    NotAchievable { target: f64, best: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "InvalidModel",
            Error::NonIntegrable(_) => "NonIntegrable",
            Error::OutOfSupport(_) => "OutOfSupport",
            Error::DomainError(_) => "DomainError",
            Error::NoConvergence(_) => "NoConvergence",
            Error::EnvelopeViolated(_) => "EnvelopeViolated",
            Error::ThresholdNotFound(_) => "ThresholdNotFound",
            Error::Divergent { .. } => "Divergent",
            Error::NoRoot { .. } => "NoRoot",
            Error::DegenerateWeights { .. } => "DegenerateWeights",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::BadWindow { .. } => "BadWindow",
            Error::DegeneratePlan { .. } => "DegeneratePlan",
            Error::NotAchievable { .. } => "NotAchievable",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
