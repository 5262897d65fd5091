use thiserror::Error;

/// Errors produced by the workbench.
///
/// Variants are grouped so callers can map them onto coarse failure classes:
/// invalid inputs, numerical failures, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied data was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A density-matrix simulation was requested for more spins than the
    /// configured memory guard allows.
    #[error("system of {k} spins exceeds the simulator limit of {k_max}")]
    SystemTooLarge { k: usize, k_max: usize },

    /// The requested decoherence model has no microscopic generator in the
    /// simulator (only the exponents 0, 1 and 2 map onto Lindblad channels).
    #[error("no microscopic dephasing generator for exponent p = {p}; supported: 0, 1, 2")]
    UnsupportedDecoherence { p: f64 },

    /// The Fisher matrix could not be inverted (degenerate acquisition grid).
    #[error("Fisher matrix is numerically singular: {0}")]
    SingularFisher(String),

    /// A numerical procedure failed: an optimizer could not bracket or
    /// converge, or a cross-check exceeded its tolerance.
    #[error("numerical failure: {0}")]
    NonConvergence(String),

    /// The trace cannot identify the precession frequency unambiguously
    /// (the accrued phase exceeds half a cycle somewhere on the record).
    #[error("phase ambiguity: {0}")]
    PhaseAmbiguity(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
