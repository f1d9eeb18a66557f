use thiserror::Error;

/// Errors raised by the integrators, samplers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported step count {steps} for {family}")]
    Range { family: &'static str, steps: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("newton iteration failed to converge at step {step}: last residual {residual:e}")]
    Solver { step: usize, residual: f64 },

    #[error("non-finite state at index {index}")]
    Divergence { index: usize },

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("step matrix singular at step {step}; reduce the step size")]
    StepSize { step: usize },

    #[error("sampler diagnostics: {0}")]
    Diagnostics(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures map to exit code 3; everything else is a
    /// configuration or usage problem (exit code 2).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solver { .. }
                | Error::Divergence { .. }
                | Error::Matrix(_)
                | Error::StepSize { .. }
                | Error::Diagnostics(_)
        )
    }

    /// Re-labels a step-local failure with the global step index.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Solver { residual, .. } => Error::Solver { step, residual },
            Error::StepSize { .. } => Error::StepSize { step },
            Error::Divergence { .. } => Error::Divergence { index: step + 1 },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
