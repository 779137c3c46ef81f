use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("spectrum degenerate: minimum splitting {splitting:.3e} at s = {s:.6}")]
    ModelDegeneracy { s: f64, splitting: f64 },
    #[error("grid too coarse: eigenvector tracking lost at s = {s:.6} (overlap {overlap:.3})")]
    GridTooCoarse { s: f64, overlap: f64 },
    #[error("runtime too large: {steps} steps would be needed for tolerance {tol:.1e}")]
    RuntimeTooLarge { steps: u64, tol: f64 },
    #[error("phase undefined: overlap modulus {modulus:.3e} at s = {s:.6}")]
    PhaseUndefined { s: f64, modulus: f64 },
    #[error("branch resolution failed after {doublings} doublings")]
    BranchResolutionFailed { doublings: usize },
    #[error("ambiguous lift: estimate {estimate:.6} is within {margin:.2e} of the interval edge")]
    AmbiguousLift { estimate: f64, margin: f64 },
    #[error("Richardson inputs must be lifted into a common interval")]
    UnliftedInput,
    #[error("unsupported order: {0}")]
    UnsupportedOrder(String),
    #[error("pipeline inconsistent: {0}")]
    PipelineInconsistent(String),
    #[error("smooth bump misconfigured: rejection acceptance {acceptance:.2e}")]
    MisconfiguredBump { acceptance: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Configuration problems map to exit code 2, everything numerical to 3.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::UnsupportedOrder(_) | Error::MisconfiguredBump { .. })
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Numerical(format!("json: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Numerical(format!("csv: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
