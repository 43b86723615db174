use thiserror::Error;

/// Errors raised by packet construction, the arrival kernels, the stationary
/// scattering solver and the time-domain propagator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("grid is empty or does not cover the packet support {needed:?}")]
    EmptyGrid { needed: (f64, f64) },

    #[error("packet is not directed: {mass:.3e} of the probability lies on the wrong half-line")]
    DirectionalityViolation { mass: f64 },

    #[error("momentum {momentum} lies outside the grid support [{min}, {max}]")]
    OutOfSupport { momentum: f64, min: f64, max: f64 },

    #[error(
        "oscillation not resolved: phase step {phase_step:.3} rad between adjacent momenta at t = {time}"
    )]
    QuadratureUnresolved { phase_step: f64, time: f64 },

    #[error("time window too narrow: captured probability {total:.9} of {expected:.9}")]
    WindowTooNarrow { total: f64, expected: f64 },

    #[error("distribution carries no probability")]
    EmptyDistribution,

    #[error("segment propagation produced a non-finite value at p = {momentum}")]
    EvanescentOverflow { momentum: f64 },

    #[error("potential support is not finite")]
    NonFiniteSupport,

    #[error("coefficient grid does not cover the packet support")]
    GridMismatch,

    #[error("detector at X = {detector} is not asymptotic; minimum allowed X is {min_allowed}")]
    NotAsymptotic { detector: f64, min_allowed: f64 },

    #[error("packet momentum {momentum} exceeds grid Nyquist momentum {nyquist}")]
    AliasingRisk { momentum: f64, nyquist: f64 },

    #[error("time step too large: kinetic phase per step {phase:.3} exceeds 0.5")]
    StabilityViolation { phase: f64 },

    #[error("integrated flux {throughput:.3e} is not positive")]
    ZeroThroughput { throughput: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
