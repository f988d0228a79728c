//! Outage exponents for wideband fading channels in the low-SNR limit.
//!
//! Spreading power `ρ` over `K` independent channels, the linearized rate
//! `(ρ/K) Σ J̇_k` falls below `ρ/η` with probability decaying like
//! `exp(-K E(η))`. This crate computes `E(η)` for scalar and MIMO fading
//! models, optimizes the MIMO input covariance, evaluates threshold
//! feedback protocols, and checks the asymptotics by Monte Carlo.

pub mod error;
pub mod export;
pub mod exponent;
pub mod feedback;
pub mod linalg;
pub mod mimo;
pub mod models;
pub mod montecarlo;
pub mod optimize;

pub use error::{Error, Result};
pub use exponent::{
    exponent_closed_form, exponent_curve, exponent_numeric, ExponentCurve, ExponentPoint,
};
pub use feedback::{
    conjecture_scan, general_exponent, min_energy_per_nat, onoff_envelope, onoff_exponent,
    ConjectureReport, FeedbackExponentPoint, ProtocolParams, Regime,
};
pub use mimo::{
    correlated_exponent, shape_covariance, CovarianceSpec, ShapingOptions, ShapingResult,
    SpatialCorrelation,
};
pub use models::{FadingModel, ModelDescriptor, ModelKind, RateDerivative};
pub use montecarlo::{
    estimate_outage, fit_exponent, OutageEstimate, RateMode, SamplerKind, SimConfig,
    SimConfigDescriptor, SimTarget,
};
