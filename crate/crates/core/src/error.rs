// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the geometry, transport, projection and sampling layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("radius r = {r} is inside the horizon guard r > {guard}")]
    HorizonDomain { r: f64, guard: f64 },

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("vectors are based at different spacetime points")]
    BasePointMismatch,

    #[error("integration approached the horizon guard at r = {r}")]
    HorizonApproach { r: f64 },

    #[error("integrator step failure: {0}")]
    StepFailure(String),

    #[error("initial tangent has g(u,u) = {value}, expected {expected}")]
    BadNormalization { value: f64, expected: f64 },

    #[error("geodesics do not share a common origin (separation {separation:e})")]
    CommonOriginMismatch { separation: f64 },

    #[error("no static observer exists at this event")]
    StaticFrameUnavailable,

    #[error("degenerate basis during Gram-Schmidt (pivot {pivot:e})")]
    DegenerateBasis { pivot: f64 },

    #[error("cannot project a zero vector")]
    ZeroVector,

    #[error("difference vector d is degenerate (|d| = {norm:e})")]
    DegenerateD { norm: f64 },

    #[error("at least {min} samples are required, got {n}")]
    InsufficientSamples { n: usize, min: usize },

    #[error("conservation drift {drift:e} exceeds the limit {limit:e}")]
    DriftExceeded { drift: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
