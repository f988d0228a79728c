//! Monte Carlo outage simulation and empirical exponent fitting.
//!
//! Rates are simulated either exactly (`Σ log(1 + (ρ/K) J̇)`-style per-channel
//! mutual information, or the two-group feedback sum) or in the linearized
//! form `(ρ/K) Σ J̇`. Trials for each `K` are split into fixed-size blocks,
//! each with its own ChaCha stream keyed by `(K, block)`, so estimates are
//! bit-identical regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{invalid, Error, Result};
use crate::exponent::exponent_numeric;
use crate::feedback::{general_exponent, ProtocolParams};
use crate::models::{FadingModel, ModelDescriptor};

const BLOCK: usize = 2048;
pub const MIN_TRIALS: usize = 100;
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Debug)]
pub enum SimTarget {
    Model(FadingModel),
    Protocol(ProtocolParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    #[serde(alias = "exact_rate")]
    Exact,
    Linearized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Plain,
    Tilted,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub target: SimTarget,
    pub rho: f64,
    pub eta: f64,
    pub k_grid: Vec<usize>,
    pub trials: usize,
    pub mode: RateMode,
    pub sampler: SamplerKind,
    pub seed: u64,
    /// Estimates below this probability are flagged and end the `K` sweep.
    pub min_outage: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolDescriptor {
    pub tau: f64,
    #[serde(default)]
    pub g0: f64,
}

fn default_rho() -> f64 {
    1.0
}

fn default_k_grid() -> Vec<usize> {
    (20..=160).step_by(20).collect()
}

fn default_trials() -> usize {
    100_000
}

/// JSON form of a [`SimConfig`]; exactly one of `model` / `protocol` must be set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfigDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolDescriptor>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub eta: f64,
    /// Defaults to `K = 20, 40, ..., 160`.
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub mode: RateMode,
    pub sampler: SamplerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_outage: Option<f64>,
}

impl SimConfigDescriptor {
    pub fn build(&self) -> Result<SimConfig> {
        let target = match (&self.model, &self.protocol) {
            (Some(m), None) => SimTarget::Model(m.build()?),
            (None, Some(p)) => SimTarget::Protocol(ProtocolParams::new(p.tau, p.g0)?),
            _ => return Err(invalid("exactly one of `model` or `protocol` must be given")),
        };
        let cfg = SimConfig {
            target,
            rho: self.rho,
            eta: self.eta,
            k_grid: self.k_grid.clone(),
            trials: self.trials,
            mode: self.mode,
            sampler: self.sampler,
            seed: self.seed,
            min_outage: self.min_outage,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid("rho must be > 0"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta must be > 0"));
        }
        if self.trials < MIN_TRIALS {
            return Err(invalid(format!("trials must be >= {MIN_TRIALS}")));
        }
        if self.k_grid.is_empty() || self.k_grid[0] == 0 {
            return Err(invalid("k_grid must be non-empty with K >= 1"));
        }
        if self.k_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("k_grid must be strictly increasing"));
        }
        if self.sampler == SamplerKind::Tilted {
            if self.mode != RateMode::Linearized {
                return Err(invalid("the tilted sampler requires linearized mode"));
            }
            match &self.target {
                SimTarget::Model(m) if m.gamma_family().is_some() => {}
                SimTarget::Model(m) => return Err(Error::TiltingUnavailable(m.name())),
                SimTarget::Protocol(_) => return Err(Error::TiltingUnavailable("feedback protocol")),
            }
        }
        Ok(())
    }

    /// Target rate `r = ρ/η`.
    pub fn target_rate(&self) -> f64 {
        self.rho / self.eta
    }

    /// Analytical exponent at this configuration's `η`.
    pub fn analytical_exponent(&self) -> Result<f64> {
        match &self.target {
            SimTarget::Model(m) => Ok(exponent_numeric(m, self.eta)?.exponent),
            SimTarget::Protocol(p) => Ok(general_exponent(p, self.eta)?.exponent),
        }
    }

    /// One draw of `R(K, ρ)` in the configured mode.
    pub fn draw_rate<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        match &self.target {
            SimTarget::Model(m) => {
                let snr = self.rho / k as f64;
                match self.mode {
                    RateMode::Linearized => {
                        snr * (0..k).map(|_| m.draw_rate_derivative(rng)).sum::<f64>()
                    }
                    RateMode::Exact => (0..k).map(|_| m.draw_state(rng).rate(snr)).sum(),
                }
            }
            SimTarget::Protocol(p) => {
                let (exact, linear) = draw_feedback_rates(p, self.rho, k, rng);
                match self.mode {
                    RateMode::Exact => exact,
                    RateMode::Linearized => linear,
                }
            }
        }
    }

    /// `(exact, linearized)` rates from one shared channel realization.
    pub fn draw_rate_pair<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> (f64, f64) {
        match &self.target {
            SimTarget::Model(m) => {
                let snr = self.rho / k as f64;
                (0..k).fold((0.0, 0.0), |(e, l), _| {
                    let s = m.draw_state(rng);
                    (e + s.rate(snr), l + snr * s.rate_derivative())
                })
            }
            SimTarget::Protocol(p) => draw_feedback_rates(p, self.rho, k, rng),
        }
    }
}

/// Feedback-protocol rates for one realization: `K0 ~ Binomial(K, p0)` below
/// threshold with gains from the truncated exponential on `[0, τ]`, the rest
/// `τ + Exp(1)`. Empty groups waste their power share.
fn draw_feedback_rates<R: Rng + ?Sized>(
    p: &ProtocolParams,
    rho: f64,
    k: usize,
    rng: &mut R,
) -> (f64, f64) {
    let p0 = p.p0();
    let k0 = Binomial::new(k as u64, p0).expect("valid p0").sample(rng) as usize;
    let k1 = k - k0;
    let (mut exact, mut linear) = (0.0, 0.0);
    if k0 > 0 {
        let snr = p.g0() * rho / k0 as f64;
        for _ in 0..k0 {
            let u: f64 = rng.random();
            let a = -(-u * p0).ln_1p();
            exact += (snr * a).ln_1p();
            linear += snr * a;
        }
    }
    if k1 > 0 {
        let snr = p.g1() * rho / k1 as f64;
        for _ in 0..k1 {
            let e: f64 = rng.sample(Exp1);
            let a = p.tau() + e;
            exact += (snr * a).ln_1p();
            linear += snr * a;
        }
    }
    (exact, linear)
}

/// `n` draws of `R(K, ρ)`, deterministic in `config.seed`.
pub fn simulate_rates(config: &SimConfig, k: usize, n: usize) -> Result<Vec<f64>> {
    config.validate()?;
    if k == 0 || n == 0 {
        return Err(invalid("K and n must be >= 1"));
    }
    let blocks = n.div_ceil(BLOCK);
    let out: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(config.seed, k, b);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len).map(|_| config.draw_rate(k, &mut rng)).collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn block_rng(seed: u64, k: usize, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | block as u64);
    rng
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct BlockStats {
    n: u64,
    hits: u64,
    sum: KahanSum,
    sum_sq: KahanSum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OutageEstimate {
    pub k: usize,
    pub outage_prob: f64,
    pub std_err: f64,
    pub log_prob: f64,
    /// Effective sample size (`trials` for plain sampling).
    pub n_effective: f64,
    pub hits: u64,
    /// Excluded from fitting: no hits (plain: rule-of-three bound), or below `min_outage`.
    pub flagged: bool,
}

impl OutageEstimate {
    pub fn is_valid(&self) -> bool {
        !self.flagged && self.outage_prob > 0.0 && self.outage_prob < 1.0 && self.std_err > 0.0
    }
}

struct Tilt {
    lambda: f64,
    dist: rand_distr::Gamma<f64>,
    log_mgf: f64,
}

fn estimate_one(config: &SimConfig, k: usize, tilt: Option<&Tilt>) -> OutageEstimate {
    let r = config.target_rate();
    let blocks = config.trials.div_ceil(BLOCK);
    let stats: Vec<BlockStats> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(config.seed, k, b);
            let len = BLOCK.min(config.trials - b * BLOCK);
            let mut st = BlockStats {
                n: len as u64,
                ..Default::default()
            };
            for _ in 0..len {
                match tilt {
                    None => {
                        if config.draw_rate(k, &mut rng) <= r {
                            st.hits += 1;
                        }
                    }
                    Some(t) => {
                        let s: f64 = (0..k).map(|_| t.dist.sample(&mut rng)).sum();
                        let rate = config.rho / k as f64 * s;
                        if rate <= r {
                            st.hits += 1;
                            // Weight relative to exp(KΛ - λK/η); at most 1 on hits.
                            let u = (-t.lambda * (s - k as f64 / config.eta)).exp();
                            st.sum.add(u);
                            st.sum_sq.add(u * u);
                        }
                    }
                }
            }
            st
        })
        .collect();

    let mut n = 0u64;
    let mut hits = 0u64;
    let mut sum = KahanSum::default();
    let mut sum_sq = KahanSum::default();
    for st in &stats {
        n += st.n;
        hits += st.hits;
        sum.add(st.sum.value());
        sum_sq.add(st.sum_sq.value());
    }
    let nf = n as f64;

    match tilt {
        None => {
            if hits == 0 {
                let bound = 3.0 / nf;
                return OutageEstimate {
                    k,
                    outage_prob: bound,
                    std_err: 0.0,
                    log_prob: bound.ln(),
                    n_effective: nf,
                    hits,
                    flagged: true,
                };
            }
            let p = hits as f64 / nf;
            OutageEstimate {
                k,
                outage_prob: p,
                std_err: (p * (1.0 - p) / nf).sqrt(),
                log_prob: p.ln(),
                n_effective: nf,
                hits,
                flagged: false,
            }
        }
        Some(t) => {
            let kf = k as f64;
            let log_scale = kf * t.log_mgf - t.lambda * kf / config.eta;
            let (s1, s2) = (sum.value(), sum_sq.value());
            if hits == 0 || s1 <= 0.0 {
                return OutageEstimate {
                    k,
                    outage_prob: 0.0,
                    std_err: 0.0,
                    log_prob: f64::NEG_INFINITY,
                    n_effective: 0.0,
                    hits,
                    flagged: true,
                };
            }
            let mean_u = s1 / nf;
            let var_u = ((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0);
            let scale = log_scale.exp();
            OutageEstimate {
                k,
                outage_prob: scale * mean_u,
                std_err: scale * (var_u / nf).sqrt(),
                log_prob: log_scale + mean_u.ln(),
                n_effective: s1 * s1 / s2,
                hits,
                flagged: false,
            }
        }
    }
}

/// Outage probability estimates `Pr[R(K, ρ) <= ρ/η]` over the configured `K` grid.
pub fn estimate_outage(config: &SimConfig) -> Result<Vec<OutageEstimate>> {
    config.validate()?;
    let tilt = match (&config.sampler, &config.target) {
        (SamplerKind::Tilted, SimTarget::Model(m)) => {
            let lambda = exponent_numeric(m, config.eta)?.lambda_star;
            if lambda < 0.0 {
                Some(Tilt {
                    lambda,
                    dist: m.tilted_distribution(lambda)?,
                    log_mgf: m.log_mgf(lambda)?,
                })
            } else {
                None
            }
        }
        _ => None,
    };
    let mut out = Vec::with_capacity(config.k_grid.len());
    for &k in &config.k_grid {
        let mut est = estimate_one(config, k, tilt.as_ref());
        let below = config.min_outage.is_some_and(|m| est.outage_prob < m);
        if below {
            est.flagged = true;
        }
        out.push(est);
        if below {
            break;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Weighted least squares of `-log(outage)` on `K` with weights `1/var(log estimate)`.
pub fn fit_exponent(estimates: &[OutageEstimate]) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64, f64)> = estimates
        .iter()
        .filter(|e| e.is_valid())
        .map(|e| {
            let rel = e.std_err / e.outage_prob;
            (e.k as f64, -e.log_prob, 1.0 / (rel * rel))
        })
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            valid: pts.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    weighted_line_fit(&pts)
}

/// Fits `y = intercept + slope x` to `(x, y, weight)` triples.
pub fn weighted_line_fit(pts: &[(f64, f64, f64)]) -> Result<ExponentFit> {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("degenerate abscissae in line fit"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    let ssr: f64 = pts
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        points: pts.len(),
    })
}

/// Exact `log Pr[(1/K) Σ J̇ <= 1/η]` when `J̇` is Gamma distributed (the linearized outage).
pub fn gamma_log_outage(model: &FadingModel, eta: f64, k: usize) -> Option<f64> {
    let (shape, scale) = model.gamma_family()?;
    let kf = k as f64;
    Some(gamma_lr(kf * shape, kf / (eta * scale)).ln())
}

/// Unweighted slope of the exact Gamma-CDF `-log` outage over the given `K` values.
pub fn gamma_oracle_slope(model: &FadingModel, eta: f64, ks: &[usize]) -> Option<f64> {
    let pts = ks
        .iter()
        .map(|&k| Some((k as f64, -gamma_log_outage(model, eta, k)?, 1.0)))
        .collect::<Option<Vec<_>>>()?;
    if pts.len() < 2 {
        return None;
    }
    weighted_line_fit(&pts).ok().map(|f| f.slope)
}

/// Sample mean and standard error of the linearized `R(K, ρ)/ρ`.
pub fn linearized_rate_per_cost(
    target: &SimTarget,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let cfg = SimConfig {
        target: target.clone(),
        rho: 1.0,
        eta: 1.0,
        k_grid: vec![k],
        trials: trials.max(MIN_TRIALS),
        mode: RateMode::Linearized,
        sampler: SamplerKind::Plain,
        seed,
        min_outage: None,
    };
    let rates = simulate_rates(&cfg, k, trials)?;
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub analytical_exponent: f64,
    pub ratio: f64,
    /// Slope of the exact finite-`K` outage over the same `K` values, when available.
    pub oracle_slope: Option<f64>,
    pub points: usize,
}

/// Fits the estimates and compares against the analytical exponent.
pub fn summarize(config: &SimConfig, estimates: &[OutageEstimate]) -> Result<FitSummary> {
    let fit = fit_exponent(estimates)?;
    let analytical = config.analytical_exponent()?;
    let oracle_slope = match (&config.target, config.mode) {
        (SimTarget::Model(m), RateMode::Linearized) => {
            let ks: Vec<usize> = estimates.iter().filter(|e| e.is_valid()).map(|e| e.k).collect();
            gamma_oracle_slope(m, config.eta, &ks)
        }
        _ => None,
    };
    Ok(FitSummary {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        analytical_exponent: analytical,
        ratio: fit.slope / analytical,
        oracle_slope,
        points: fit.points,
    })
}
