use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("form ({i},{j},{l}) violates the null condition (symmetric-part residual {residual:.3e})")]
    NotNull {
        i: usize,
        j: usize,
        l: usize,
        residual: f64,
    },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("local error estimate {estimate:.3e} exceeds 1e-8 at u = {u}")]
    StepRejected { u: f64, estimate: f64 },
    #[error("renormalizer is singular at u = {u}")]
    Singular { u: f64 },
    #[error("eigenvalue iteration did not converge within {0} sweeps")]
    EigenNonConvergence(usize),
    #[error(
        "v' grid too coarse: local oscillation wavelength {wavelength:.4e} resolved by {nodes:.2} nodes (need {required})"
    )]
    Underresolved {
        wavelength: f64,
        nodes: f64,
        required: f64,
    },
    #[error("numerical blow-up at t = {t}")]
    NumericalBlowup { t: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for input problems (bad config, bad system or profile) as opposed to
    /// failures of the numerics themselves.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NotNull { .. }
                | Error::InvalidSystem(_)
                | Error::InvalidProfile(_)
                | Error::Domain(_)
                | Error::Validation(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
