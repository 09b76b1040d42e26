use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Drift hypotheses of the closed form fail (`epsilon == 0` or
    /// `epsilon_tilde == epsilon`).
    #[error("degenerate drift: {0}")]
    DegenerateDrift(String),

    /// Future-entrant utility integral diverges.
    #[error("utility explosion: finiteness margin r - rho - delta0*[gamma + (delta0-1) xi^2 / 2] = {margin:.6} is not positive")]
    UtilityExplosion { margin: f64 },

    #[error("assumption violated: {0}")]
    OrderingViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insolvent cohort at z = {z}: total resource {resource:e} <= 0")]
    InsolventCohort { z: f64, resource: f64 },

    #[error("empty admissible region: {0}")]
    EmptyRegion(String),

    #[error("standing assumption violated: {0}")]
    Assumption(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
