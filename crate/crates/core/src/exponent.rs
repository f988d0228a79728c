//! Wideband outage exponents `E(η) = sup_{λ ≤ 0} {λ/η - Λ(λ)}`.
//!
//! [`exponent_numeric`] evaluates the transform for any [`FadingModel`];
//! [`exponent_closed_form`] evaluates the known closed forms so the two can
//! be cross-checked.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::models::{FadingModel, ModelDescriptor, ModelKind};
use crate::optimize::maximize_concave_nonpositive;

/// Slack below `η̄` still treated as the boundary point `η = η̄`.
pub const ETA_BAR_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentPoint {
    pub eta: f64,
    pub exponent: f64,
    pub lambda_star: f64,
    /// The λ bracket reached its cap; `exponent` is a lower bound.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub capped: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentCurve {
    pub model: ModelDescriptor,
    pub eta_bar: f64,
    pub points: Vec<ExponentPoint>,
    /// Grid entries below `η̄` that were skipped.
    pub dropped: Vec<f64>,
}

pub fn eta_to_db(eta: f64) -> f64 {
    10.0 * eta.log10()
}

/// Generic transform `sup_{λ ≤ 0} {λ/η - Λ(λ)}` given `Λ` and `Λ'`.
///
/// `eta_bar = 1/Λ'(0)`. Queries below `eta_bar` fail; the boundary `η = η̄`
/// returns exactly zero at `λ* = 0`.
pub fn legendre_nonpositive<L, D>(
    eta: f64,
    eta_bar: f64,
    log_mgf: L,
    log_mgf_derivative: D,
) -> Result<ExponentPoint>
where
    L: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    if eta < eta_bar - ETA_BAR_SLACK * eta_bar.max(1.0) {
        return Err(Error::BelowMinimumEnergy { eta, eta_bar });
    }
    if eta <= eta_bar {
        return Ok(ExponentPoint {
            eta,
            exponent: 0.0,
            lambda_star: 0.0,
            capped: false,
        });
    }
    let inv = 1.0 / eta;
    let r = maximize_concave_nonpositive(
        |l| l * inv - log_mgf(l),
        |l| inv - log_mgf_derivative(l),
    );
    Ok(ExponentPoint {
        eta,
        exponent: r.value.max(0.0),
        lambda_star: r.argmax,
        capped: r.capped,
    })
}

pub fn exponent_numeric(model: &FadingModel, eta: f64) -> Result<ExponentPoint> {
    legendre_nonpositive(
        eta,
        model.eta_bar(),
        |l| model.log_mgf_unchecked(l),
        |l| model.log_mgf_derivative(l),
    )
}

/// Rayleigh exponent `1/η - 1 + log η`.
pub fn rayleigh_closed_form(eta: f64) -> f64 {
    1.0 / eta - 1.0 + eta.ln()
}

/// Rician exponent as an explicit function of `η` and `κ`.
pub fn rician_closed_form(eta: f64, kappa: f64) -> f64 {
    let c = kappa * kappa;
    let s = 1.0 - c;
    let root = (1.0 + 4.0 * c / (s * s * eta)).sqrt();
    1.0 / (s * eta) + c / s - root + (s * eta / 2.0).ln() + (1.0 + root).ln()
}

pub fn exponent_closed_form(model: &FadingModel, eta: f64) -> Result<ExponentPoint> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    let eta_bar = model.eta_bar();
    if eta < eta_bar - ETA_BAR_SLACK * eta_bar.max(1.0) {
        return Err(Error::BelowMinimumEnergy { eta, eta_bar });
    }
    let (exponent, lambda_star) = match model.kind() {
        ModelKind::Rayleigh => (rayleigh_closed_form(eta), 1.0 - eta),
        ModelKind::Nakagami { m } => (m * rayleigh_closed_form(eta), m * (1.0 - eta)),
        ModelKind::MimoWhite { n_t, n_r } => {
            let (nt, nr) = (*n_t as f64, *n_r as f64);
            (nt * nr * rayleigh_closed_form(nr * eta), nt * (1.0 - nr * eta))
        }
        ModelKind::Rician { kappa } => {
            // λ* = (1 - u)/s where u solves u² - sηu - κ²η = 0, u >= 1.
            let c = kappa * kappa;
            let s = 1.0 - c;
            let u = 0.5 * s * eta * (1.0 + (1.0 + 4.0 * c / (s * s * eta)).sqrt());
            (rician_closed_form(eta, *kappa), (1.0 - u) / s)
        }
        ModelKind::MimoCorrelated(_) => return Err(Error::NoClosedForm("mimo_correlated")),
    };
    Ok(ExponentPoint {
        eta,
        exponent,
        lambda_star: lambda_star.min(0.0),
        capped: false,
    })
}

/// True when [`exponent_closed_form`] supports this model.
pub fn has_closed_form(model: &FadingModel) -> bool {
    !matches!(model.kind(), ModelKind::MimoCorrelated(_))
}

/// Evaluates the exponent over a strictly increasing grid, skipping entries below `η̄`.
pub fn exponent_curve(model: &FadingModel, eta_grid: &[f64]) -> Result<ExponentCurve> {
    if eta_grid.is_empty() {
        return Err(invalid("eta grid is empty"));
    }
    if eta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("eta grid must be strictly increasing"));
    }
    let eta_bar = model.eta_bar();
    let mut points = Vec::with_capacity(eta_grid.len());
    let mut dropped = Vec::new();
    for &eta in eta_grid {
        match exponent_numeric(model, eta) {
            Ok(p) => points.push(p),
            Err(Error::BelowMinimumEnergy { .. }) => dropped.push(eta),
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(Error::BelowMinimumEnergy {
            eta: *eta_grid.last().unwrap(),
            eta_bar,
        });
    }
    Ok(ExponentCurve {
        model: model.descriptor(),
        eta_bar,
        points,
        dropped,
    })
}

/// `n` points from `lo` to `hi` inclusive, logarithmically spaced.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}
