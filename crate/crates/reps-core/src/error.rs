//! Error type shared across the crate.

/// Everything that can go wrong while building or solving a problem instance.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A transition row does not sum to 1 (or has a negative/non-finite entry).
    #[error("transition row (s={s}, a={a}) is not a probability distribution")]
    RowNotStochastic { s: usize, a: usize },

    /// A reward falls outside `[0, 1]`.
    #[error("reward at (s={s}, a={a}) is outside [0, 1]")]
    RewardOutOfRange { s: usize, a: usize },

    /// Discount factor outside the open interval `(0, 1)`.
    #[error("discount factor must lie strictly inside (0, 1)")]
    BadDiscount,

    /// Initial state distribution is not a probability distribution.
    #[error("initial state distribution is not a probability distribution")]
    BadInitial,

    /// A vector that must be a probability distribution is not normalized.
    #[error("{what} must sum to 1 (got {sum})")]
    NotNormalized { what: &'static str, sum: f64 },

    /// Negative mass where a nonnegative measure is required.
    #[error("negative mass at (s={s}, a={a})")]
    NegativeMass { s: usize, a: usize },

    /// Dimensions of related objects disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),

    /// A linear system could not be solved to tolerance.
    #[error("linear system is singular or too ill-conditioned")]
    SingularSystem,

    /// Branching factor outside `[1, n_states]`.
    #[error("branching factor must lie in [1, n_states]")]
    BadBranching,

    /// Reference-distribution floor too large to mix in.
    #[error("floor must lie in (0, 1/(n_states*n_actions))")]
    FloorTooLarge,

    /// Reference distribution has a zero (or negative) entry.
    #[error("reference distribution must be strictly positive everywhere")]
    ZeroReferenceMass,

    /// NaN or infinity where a finite value is required.
    #[error("non-finite input")]
    NonFiniteInput,

    /// Root-finding bracket failed to enclose a sign change.
    #[error("bisection bracket does not enclose a root")]
    BisectionNoBracket,

    /// Brute-force oracle refused a problem that is too large.
    #[error("dimension {dim} exceeds the brute-force limit of {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    /// Visitation floor outside `(0, 1/n_states]`.
    #[error("visitation floor must lie in (0, 1/n_states]")]
    BadRho,

    /// An objective evaluated to NaN or infinity during optimization.
    #[error("objective became non-finite during optimization")]
    NonFiniteObjective,

    /// A configuration parameter is out of range.
    #[error("bad parameter: {0}")]
    BadParameter(&'static str),

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
