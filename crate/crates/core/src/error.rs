use thiserror::Error;

use crate::overlay::PeerId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A label, key or dimension that violates the structural rules of the template.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: u8, right: u8 },

    /// Rejected configuration, reported before any simulation work happens.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("peer {0} is not live")]
    UnknownPeer(PeerId),

    /// A runtime self-check found inconsistent state.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
