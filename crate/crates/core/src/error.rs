use thiserror::Error;

/// Errors produced by the bound, source and solver routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("slope at removable singularity: |s| = {s_abs} is within the guard window of alpha = {alpha}")]
    SlopeSingularity { s_abs: f64, alpha: f64 },

    #[error("SLB vacuous: lower bound is nonpositive on the whole bracket (0, {d_max}]")]
    VacuousSlb { d_max: f64 },

    #[error("insufficient span: truncated tail mass {tail:e} exceeds 1e-8")]
    InsufficientSpan { tail: f64 },

    #[error("witness requires |s| > alpha (got |s| = {s_abs}, alpha = {alpha})")]
    WitnessDomain { s_abs: f64, alpha: f64 },

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("bound not applicable: {0}")]
    NotApplicable(String),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_negative_slope(s: f64) -> Result<()> {
    if s < 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("slope must be finite and negative, got {s}")))
    }
}
