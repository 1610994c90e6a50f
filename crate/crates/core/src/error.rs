//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by solvers, validators, and file ingestion.
#[derive(Debug, Error)]
pub enum UcError {
    /// A unit's parameters violate their declared invariants.
    #[error("invalid unit {unit}: {reason}")]
    InvalidUnit { unit: usize, reason: String },

    /// A dispatch argument breaks a precondition (e.g. output from an
    /// off unit, or output outside the generation box).
    #[error("invalid dispatch for unit {unit}: {reason}")]
    InvalidDispatch { unit: usize, reason: String },

    /// Matrix/vector dimensions do not agree between inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The network is not connected, so PTDF factors do not exist.
    #[error("network islanded: {0}")]
    Islanding(String),

    /// A problem has no feasible solution; the payload names the
    /// constraint class that failed first.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An exhaustive solve was requested above the enumeration cap.
    #[error("instance too large for enumeration: {binaries} binaries > cap {cap}")]
    EnumerationCap { binaries: usize, cap: usize },

    /// An action was applied that the current candidate set does not
    /// contain or that the dispatch engine rejects.
    #[error("environment contract violation: {0}")]
    ContractViolation(String),

    /// A Q-network update produced a non-finite loss or parameter.
    #[error("training diverged in member {member}: {reason}")]
    TrainingDivergence { member: usize, reason: String },

    /// All ensemble members failed.
    #[error("ensemble failure: {0}")]
    EnsembleFailure(String),

    /// File parsing failed; includes a location when available.
    #[error("parse error in {path}{}: {reason}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        path: String,
        line: Option<usize>,
        reason: String,
    },

    /// Configuration is structurally invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, UcError>;
