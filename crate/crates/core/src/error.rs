use thiserror::Error;

use crate::grid::NodeFamily;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("grid alignment: operator expects {expected:?} nodes, field lives on {actual:?} nodes")]
    Alignment { expected: NodeFamily, actual: NodeFamily },

    /// A configuration value failed validation. `key` is the dotted path.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solution blew up at step {step} (max |rho| = {max_abs:e})")]
    BlowUp { step: u64, max_abs: f64 },

    #[error("all {realizations} realizations failed for scheme `{scheme}`")]
    EnsembleFailed { scheme: String, realizations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Dimension { expected, actual })
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
