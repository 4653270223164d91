//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A state component became NaN or infinite during integration. For the
    /// cascade, `stage` carries the iterate index at which blow-up occurred.
    #[error("state became non-finite at t = {t}{}", stage.map(|k| format!(" (iterate {k})")).unwrap_or_default())]
    NonFiniteState { t: f64, stage: Option<usize> },

    /// The fixed step is larger than the smallest delay the right side reads,
    /// which would force extrapolation into the not-yet-computed future.
    #[error("step {step} exceeds minimum delay {min_delay}")]
    StepExceedsMinDelay { step: f64, min_delay: f64 },

    /// Evaluation time outside `[t0 - h_bar, t_end]`.
    #[error("time {t} outside trajectory domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    /// Repeated (or numerically inseparable) eigenvalues; the eigenbasis
    /// transformation assumes simple eigenvalues.
    #[error("matrix is defective or near-defective: {reason}")]
    DefectiveMatrix { reason: String },

    /// The nonlinearity has non-polynomial terms, so no norm majorant exists
    /// and the scalar-bound pipeline cannot run.
    #[error("nonlinearity has no polynomial majorant")]
    UnsupportedNonlinearity,

    /// A cascade of insufficient depth was supplied.
    #[error("cascade holds {available} iterates but {requested} are required")]
    MissingIterate { requested: usize, available: usize },

    /// Bound assembly requires matching horizons.
    #[error("mesh mismatch: horizons {a} and {b} differ")]
    MeshMismatch { a: f64, b: f64 },

    /// The constant matrix has a nonnegative spectral abscissa, violating the
    /// decay-envelope hypothesis.
    #[error("matrix is not Hurwitz: alpha1 = {alpha1}")]
    NotHurwitz { alpha1: f64 },

    /// Radial search never saw an exceedance up to the configured cap.
    #[error("probe stayed inside up to rho_max = {rho_max}")]
    NoExceedanceFound { rho_max: f64 },

    /// Even the seed radius was outside the region.
    #[error("seed radius {seed} already exceeded the threshold")]
    SeedExceeded { seed: f64 },

    /// Invalid run configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
