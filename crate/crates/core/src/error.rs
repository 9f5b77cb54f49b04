use thiserror::Error;

/// Errors raised by the geometry, collision, boundary and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticError {
    #[error("velocity is zero: exit time is unbounded")]
    ZeroVelocity,
    #[error("point lies outside the domain (xi = {xi:e})")]
    OutsideDomain { xi: f64 },
    #[error("grazing exit: |n(x_b)·v| = {normal_speed:e} is below tolerance")]
    GrazingSingularity { normal_speed: f64 },
    #[error("exit point falls outside the chart patch")]
    ChartMismatch,
    #[error("point is not on the boundary (xi = {xi:e})")]
    NotOnBoundary { xi: f64 },
    #[error("stochastic cycle stopped after {bounces} bounces")]
    MaxBouncesExceeded { bounces: usize },
    #[error("negative radicand {value:e} in kinetic distance")]
    NegativeRadicand { value: f64 },
    #[error("kinetic weight {alpha:e} is degenerate")]
    DegenerateAlpha { alpha: f64 },
    #[error("quadrature for {what} unconverged: relative change {rel_change:e}")]
    QuadratureUnconverged { what: String, rel_change: f64 },
    #[error("kernel evaluated at the singular point u = v")]
    SingularPoint,
    #[error("velocity {speed} beyond cutoff {v_max}")]
    InterpolationOutOfRange { speed: f64, v_max: f64 },
    #[error("velocity is not incoming: n(x)·v = {normal_speed:e}")]
    WrongSide { normal_speed: f64 },
    #[error("iteration diverged after {iterations} steps (residual {residual:e})")]
    IterationDiverged { iterations: usize, residual: f64 },
    #[error("norm series has a non-positive entry at index {index}")]
    NonPositiveNorm { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, KineticError>;
