use thiserror::Error;

/// Errors produced by the library. A control solve that fails to converge
/// hands back its best iterate inside [`Error::ControlNotConverged`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("basis mismatch: vector built on basis {found}, operation expects {expected}")]
    BasisMismatch { expected: u64, found: u64 },

    #[error("order mismatch: {0}")]
    OrderMismatch(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("airy zero {kind} #{index}: {reason}")]
    AiryZero {
        kind: &'static str,
        index: usize,
        reason: String,
    },

    #[error("edge mass {edge_mass:.3e} exceeds tolerance {tolerance:.1e}; enlarge the box")]
    SupportOverflow { edge_mass: f64, tolerance: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "control solve did not converge after {} iterations (residual {:.3e})",
        .0.cg_iterations,
        .0.residual
    )]
    ControlNotConverged(Box<crate::hum::ControlSolution>),

    #[error("fixed point is not contracting: ratios {ratios:?}; reduce the data amplitude")]
    NotContracting { ratios: Vec<f64> },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
