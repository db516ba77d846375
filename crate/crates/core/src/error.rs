use thiserror::Error;

/// Errors raised by mesh construction, assembly and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// A pivot fell below the relative threshold during factorisation.
    #[error("singular system: pivot {pivot:.3e} at elimination step {step} (threshold {threshold:.3e})")]
    SingularSystem {
        step: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("degenerate cut: interface x0 = {x0} lies on a mesh grid line")]
    DegenerateCut { x0: f64 },

    #[error("linear solve did not reach the residual bound: relative residual {0:.3e}")]
    ResidualTooLarge(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::UnsupportedConfiguration(_) => "unsupported-configuration",
            Error::SingularSystem { .. } => "singular-system",
            Error::DegenerateCut { .. } => "degenerate-cut",
            Error::ResidualTooLarge(_) => "residual-too-large",
            Error::Io(_) => "io",
        }
    }

    /// True for failures caused by the numerics rather than the configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. } | Error::ResidualTooLarge(_) | Error::DegenerateCut { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
