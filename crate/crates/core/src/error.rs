//! Error type shared across the crate.

/// Everything that can go wrong in the library, grouped by the kind of
/// precondition or numerical guarantee that was violated.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A mathematical precondition on the inputs fails (wrong parameter
    /// range, invalid configuration, Laplace variable too far left, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The request would blow up combinatorially (particle count or lattice
    /// size beyond the supported caps).
    #[error("capacity error: {0}")]
    Capacity(String),

    /// An integrand pole was hit (or grazed) by an evaluation point.
    #[error("pole error: {0}")]
    Pole(String),

    /// Adaptive quadrature failed to converge to the requested tolerance.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// The finite lattice window is too small for the requested computation.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// A linear solve was singular or too ill-conditioned to trust.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// The particle-count ladder was cut while mass was still flowing upward.
    #[error("n_max error: {0}")]
    NmaxExceeded(String),

    /// A regime-specific quantity was requested in the wrong regime
    /// (e.g. a mean ejection time when the particle escapes ballistically).
    #[error("regime error: {0}")]
    Regime(String),

    /// Numerical Laplace inversion overflowed or self-diagnosed as wrong.
    #[error("inversion error: {0}")]
    Inversion(String),

    /// Too many Monte Carlo trajectories were censored for the estimator to
    /// be trusted.
    #[error("censoring error: {0}")]
    Censoring(String),

    /// The operation is not supported for these parameters by design
    /// (e.g. the contour formulas at q = 0, which route to the determinant).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A grid was too coarse to resolve the feature being measured.
    #[error("resolution error: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
