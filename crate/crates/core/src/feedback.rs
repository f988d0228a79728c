//! One-bit channel-state feedback over Rayleigh fading.
//!
//! Each channel reports whether `|H|² > τ`. A fraction `g0` of the power is
//! spread evenly over the below-threshold channels and `g1 = 1 - g0` over the
//! above-threshold ones; a group with no members wastes its share.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exponent::ETA_BAR_SLACK;
use crate::optimize::{golden_section_min, maximize_concave_nonpositive};

/// Grid spacing for the first pass of the infimum over the below-threshold fraction.
const X_GRID_STEP: f64 = 1e-3;
const X_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProtocolParams {
    tau: f64,
    g0: f64,
}

impl ProtocolParams {
    pub fn new(tau: f64, g0: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!("tau must be > 0, got {tau}")));
        }
        if !(0.0..=1.0).contains(&g0) {
            return Err(invalid(format!("g0 must lie in [0, 1], got {g0}")));
        }
        Ok(Self { tau, g0 })
    }

    /// On-off allocation (`g0 = 0`).
    pub fn on_off(tau: f64) -> Result<Self> {
        Self::new(tau, 0.0)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn g1(&self) -> f64 {
        1.0 - self.g0
    }

    /// `Pr[|H|² <= τ] = 1 - e^{-τ}`.
    pub fn p0(&self) -> f64 {
        -(-self.tau).exp_m1()
    }

    pub fn p1(&self) -> f64 {
        (-self.tau).exp()
    }

    /// `1/((1 - g0)τ)`; `+inf` when `g0 = 1`.
    pub fn threshold_eta(&self) -> f64 {
        let g1 = self.g1();
        if g1 > 0.0 {
            1.0 / (g1 * self.tau)
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BelowThreshold,
    AboveThreshold,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::BelowThreshold => "below_threshold",
            Regime::AboveThreshold => "above_threshold",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FeedbackExponentPoint {
    pub eta: f64,
    pub exponent: f64,
    pub regime: Regime,
    /// Minimizing fraction of below-threshold channels, when the binomial
    /// trade-off determines the exponent.
    pub x_star: Option<f64>,
}

/// `[τ + 1 - g0 τ/(1 - e^{-τ})]^{-1}`.
pub fn min_energy_per_nat(p: &ProtocolParams) -> f64 {
    1.0 / (p.tau + 1.0 - p.g0 * p.tau / p.p0())
}

pub fn binary_entropy(x: f64) -> f64 {
    binary_entropy_split(x, 1.0 - x)
}

/// `H_b` with `x` and `1 - x` supplied separately, so a tiny complement keeps precision.
fn binary_entropy_split(x: f64, one_minus_x: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    term(x) + term(one_minus_x)
}

/// `log(e^y - 1)` without overflow or cancellation.
fn log_expm1(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Large-`η` plateau of the on-off exponent, `τ - log(e^τ - 1) = -log(1 - e^{-τ})`.
pub fn onoff_plateau(tau: f64) -> f64 {
    -(-(-tau).exp()).ln_1p()
}

fn check_eta(eta: f64, eta_bar: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    if eta < eta_bar - ETA_BAR_SLACK * eta_bar.max(1.0) {
        return Err(Error::BelowMinimumEnergy { eta, eta_bar });
    }
    Ok(())
}

/// Closed-form exponent of the on-off scheme with threshold `τ`.
pub fn onoff_exponent(tau: f64, eta: f64) -> Result<FeedbackExponentPoint> {
    let params = ProtocolParams::on_off(tau)?;
    check_eta(eta, min_energy_per_nat(&params))?;
    let a = 1.0 / eta - tau;
    if eta > 1.0 / tau {
        return Ok(FeedbackExponentPoint {
            eta,
            exponent: onoff_plateau(tau),
            regime: Regime::AboveThreshold,
            x_star: None,
        });
    }
    if a < 1e-300 {
        // x* -> 1 and (1 - x*) log(a) -> 0 at η = 1/τ.
        return Ok(FeedbackExponentPoint {
            eta,
            exponent: onoff_plateau(tau),
            regime: Regime::BelowThreshold,
            x_star: Some(1.0),
        });
    }
    let a = a.min(1.0);
    let log_q = log_expm1(tau) + a - 1.0;
    let q = log_q.exp();
    let x = q / (q + a);
    let one_minus_x = a / (q + a);
    let exponent = tau + one_minus_x * (a - 1.0 - a.ln())
        - x * log_expm1(tau)
        - binary_entropy_split(x, one_minus_x);
    Ok(FeedbackExponentPoint {
        eta,
        exponent: clamp_round_off(exponent),
        regime: Regime::BelowThreshold,
        x_star: Some(x),
    })
}

fn clamp_round_off(e: f64) -> f64 {
    if e < 0.0 && e > -1e-12 {
        0.0
    } else {
        e
    }
}

/// Turning point of the on-off family at `η`: `(τ = 1/η, 1/η - log(e^{1/η} - 1))`.
pub fn onoff_envelope(eta: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    let tau = 1.0 / eta;
    Ok((tau, onoff_plateau(tau)))
}

/// Exponent when every channel lands below threshold (`K1 = 0`):
/// `sup_{λ ≤ 0} {λ/η + log(1 - g0 λ) - log(1 - e^{-(1 - g0 λ)τ})}`.
pub fn all_below_exponent(p: &ProtocolParams, eta: f64) -> f64 {
    let (tau, g0) = (p.tau, p.g0);
    let inv = 1.0 / eta;
    let r = maximize_concave_nonpositive(
        |l| {
            let z = (1.0 - g0 * l) * tau;
            l * inv + (-g0 * l).ln_1p() - (-(-z).exp_m1()).ln()
        },
        |l| {
            let z = (1.0 - g0 * l) * tau;
            inv - g0 / (1.0 - g0 * l) + g0 * tau / z.exp_m1()
        },
    );
    r.value
}

/// Exponent conditioned on a fraction `x ∈ (0, 1)` of below-threshold channels,
/// including the binomial cost of that fraction.
pub fn fraction_exponent(p: &ProtocolParams, eta: f64, x: f64) -> f64 {
    let (tau, g0) = (p.tau, p.g0);
    let g1 = 1.0 - g0;
    let inv = 1.0 / eta;
    let r = maximize_concave_nonpositive(
        |l| {
            let y = (1.0 - g0 * l / x) * tau;
            l * inv - x * log_expm1(y)
                + x * (x - g0 * l).ln()
                + (1.0 - x) * (1.0 - x - g1 * l).ln()
                + (1.0 - l) * tau
        },
        |l| {
            let y = (1.0 - g0 * l / x) * tau;
            inv + g0 * tau / (-(-y).exp_m1()) - x * g0 / (x - g0 * l)
                - (1.0 - x) * g1 / (1.0 - x - g1 * l)
                - tau
        },
    );
    r.value
}

/// `inf_{x ∈ (0,1)}` of [`fraction_exponent`]: grid pass, then golden-section refinement.
fn fraction_infimum(p: &ProtocolParams, eta: f64) -> (f64, f64) {
    let n = (1.0 / X_GRID_STEP).round() as usize;
    let xs: Vec<f64> = (1..n).map(|i| i as f64 * X_GRID_STEP).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| fraction_exponent(p, eta, x)).collect();
    let (i_best, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let lo = if i_best == 0 { xs[0] * 1e-3 } else { xs[i_best - 1] };
    let hi = if i_best + 1 == xs.len() {
        1.0 - (1.0 - xs[i_best]) * 1e-3
    } else {
        xs[i_best + 1]
    };
    let (x, v) = golden_section_min(|x| fraction_exponent(p, eta, x), lo, hi, X_TOL);
    if v <= vals[i_best] {
        (x, v)
    } else {
        (xs[i_best], vals[i_best])
    }
}

/// Two-level exponent: below the threshold `η <= 1/((1-g0)τ)` it is the smaller of the
/// all-below exponent and the infimum over the below-threshold fraction; above it is
/// the all-below exponent.
pub fn general_exponent(p: &ProtocolParams, eta: f64) -> Result<FeedbackExponentPoint> {
    let eta_bar = min_energy_per_nat(p);
    check_eta(eta, eta_bar)?;
    if eta <= eta_bar {
        return Ok(FeedbackExponentPoint {
            eta,
            exponent: 0.0,
            regime: if eta <= p.threshold_eta() {
                Regime::BelowThreshold
            } else {
                Regime::AboveThreshold
            },
            x_star: None,
        });
    }
    let e0 = all_below_exponent(p, eta);
    if eta > p.threshold_eta() {
        return Ok(FeedbackExponentPoint {
            eta,
            exponent: clamp_round_off(e0),
            regime: Regime::AboveThreshold,
            x_star: None,
        });
    }
    let (x, ex) = fraction_infimum(p, eta);
    let (exponent, x_star) = if ex < e0 { (ex, Some(x)) } else { (e0, None) };
    Ok(FeedbackExponentPoint {
        eta,
        exponent: clamp_round_off(exponent),
        regime: Regime::BelowThreshold,
        x_star,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanCell {
    pub tau: f64,
    pub g0: f64,
    /// `None` when `η` is below the protocol's minimum energy per nat.
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjectureReport {
    pub eta: f64,
    pub best: ProtocolParams,
    pub best_exponent: f64,
    /// Grid `τ` closest to `1/η`.
    pub nearest_tau: f64,
    /// Best cell is `g0 = 0` at the grid `τ` nearest `1/η`.
    pub supports_conjecture: bool,
    pub label: &'static str,
    pub table: Vec<ScanCell>,
}

/// Evaluates [`general_exponent`] over `tau_grid × g0_grid` and reports the argmax.
///
/// Ties go to the lowest `τ`, then the lowest `g0`.
pub fn conjecture_scan(eta: f64, tau_grid: &[f64], g0_grid: &[f64]) -> Result<ConjectureReport> {
    if tau_grid.is_empty() || g0_grid.is_empty() {
        return Err(invalid("conjecture scan needs non-empty grids"));
    }
    let mut taus = tau_grid.to_vec();
    let mut g0s = g0_grid.to_vec();
    taus.sort_by(f64::total_cmp);
    g0s.sort_by(f64::total_cmp);
    taus.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    g0s.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let params = taus
        .iter()
        .flat_map(|&t| g0s.iter().map(move |&g| ProtocolParams::new(t, g)))
        .collect::<Result<Vec<_>>>()?;

    let table: Vec<ScanCell> = params
        .par_iter()
        .map(|p| {
            let exponent = match general_exponent(p, eta) {
                Ok(pt) => Ok(Some(pt.exponent)),
                Err(Error::BelowMinimumEnergy { .. }) => Ok(None),
                Err(e) => Err(e),
            }?;
            Ok(ScanCell {
                tau: p.tau,
                g0: p.g0,
                exponent,
            })
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(usize, f64)> = None;
    for (i, cell) in table.iter().enumerate() {
        if let Some(e) = cell.exponent {
            if best.is_none_or(|(_, b)| e > b + 1e-12) {
                best = Some((i, e));
            }
        }
    }
    let (i_best, best_exponent) = best.ok_or(Error::BelowMinimumEnergy {
        eta,
        eta_bar: params
            .iter()
            .map(min_energy_per_nat)
            .fold(f64::INFINITY, f64::min),
    })?;
    let target = 1.0 / eta;
    let nearest_tau = taus
        .iter()
        .copied()
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .expect("non-empty");
    let best = params[i_best];
    Ok(ConjectureReport {
        eta,
        best,
        best_exponent,
        nearest_tau,
        supports_conjecture: best.g0 == 0.0 && best.tau == nearest_tau,
        label: "numerical support for the conjecture",
        table,
    })
}

/// Default scan grids: `τ ∈ {0.1, 0.2, ..., 3.0} ∪ {1/η}`, `g0 ∈ {0, 0.1, ..., 0.9}`.
pub fn default_scan_grids(eta: f64) -> (Vec<f64>, Vec<f64>) {
    let mut taus: Vec<f64> = (1..=30).map(|k| k as f64 / 10.0).collect();
    taus.push(1.0 / eta);
    let g0s = (0..10).map(|k| k as f64 / 10.0).collect();
    (taus, g0s)
}
