//! Fading-model families, each described through the distribution of the
//! low-SNR rate derivative `J̇(0, S)`.
//!
//! For scalar coherent channels `J̇(0, h) = |h|²` and the per-channel rate at
//! SNR `γ` is `log(1 + γ|h|²)`. For a MIMO channel with input covariance `Σ`
//! the derivative is `tr(H Σ H†)` and the rate is `log det(I + γ H Σ H†)`.
//!
//! Scalar families are normalized to `E|H|² = 1`:
//!
//! | family      | law of `J̇`                        | `Λ(λ) = log E e^{λJ̇}`                      |
//! |-------------|-----------------------------------|--------------------------------------------|
//! | Rayleigh    | `Exp(1)`                          | `-log(1 - λ)`                              |
//! | Rician(κ)   | `|CN(κ, 1-κ²)|²`                  | `κ²λ/(1 - sλ) - log(1 - sλ)`, `s = 1-κ²`   |
//! | Nakagami(m) | `Gamma(m, 1/m)`                   | `-m log(1 - λ/m)`                          |
//! | MIMO white  | `Gamma(n_t n_r, 1/n_t)`           | `-n_t n_r log(1 - λ/n_t)`                  |
//! | MIMO corr.  | `Σ μ_i Exp(1)`, `μ = eig((I⊗Σ)Ψ)` | `-Σ log(1 - λ μ_i)`                        |
//!
//! The Rician row follows from the MGF of a squared complex Gaussian with mean
//! `κ` and variance `s`: `E e^{t|X|²} = exp(tκ²/(1 - ts)) / (1 - ts)` for
//! `t < 1/s` (the noncentral chi-square MGF with two degrees of freedom after
//! rescaling by `s/2`).

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMatrix};
use crate::mimo::{CovarianceSpec, SpatialCorrelation};
use num_complex::Complex64;

/// A nonnegative realization of `J̇(0, S)` (nats per unit cost).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct RateDerivative(f64);

impl RateDerivative {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(invalid(format!("rate derivative must be finite and >= 0, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum ModelKind {
    Rayleigh,
    Rician { kappa: f64 },
    Nakagami { m: f64 },
    MimoWhite { n_t: usize, n_r: usize },
    MimoCorrelated(Box<CovarianceSpec>),
}

/// An immutable, validated fading model.
#[derive(Clone, Debug)]
pub struct FadingModel {
    kind: ModelKind,
}

/// One channel's state, sufficient to evaluate both the exact rate and its
/// low-SNR derivative from the same draw.
#[derive(Clone, Debug)]
pub enum ChannelState {
    /// `|h|²`.
    Scalar { gain: f64 },
    /// `H Σ H†` (an `n_r x n_r` Hermitian PSD matrix).
    Gram(CMatrix),
}

impl ChannelState {
    pub fn rate_derivative(&self) -> f64 {
        match self {
            ChannelState::Scalar { gain } => *gain,
            ChannelState::Gram(g) => linalg::trace_re(g),
        }
    }

    /// Per-channel mutual information `J(γ, s)` at SNR `γ`.
    pub fn rate(&self, snr: f64) -> f64 {
        match self {
            ChannelState::Scalar { gain } => (snr * gain).ln_1p(),
            ChannelState::Gram(g) => {
                let n = g.nrows();
                let a = linalg::identity(n) + linalg::hermitian_part(g).scale(snr);
                linalg::log_det_hpd(&a).expect("I + γG is positive definite")
            }
        }
    }
}

impl FadingModel {
    pub fn rayleigh() -> Self {
        Self {
            kind: ModelKind::Rayleigh,
        }
    }

    /// `H ~ CN(κ, 1 - κ²)`. `κ = 0` is accepted and coincides with Rayleigh.
    pub fn rician(kappa: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(invalid(format!("Rician kappa must lie in [0, 1), got {kappa}")));
        }
        Ok(Self {
            kind: ModelKind::Rician { kappa },
        })
    }

    pub fn nakagami(m: f64) -> Result<Self> {
        if !(m >= 0.5 && m.is_finite()) {
            return Err(invalid(format!("Nakagami m must be >= 1/2, got {m}")));
        }
        Ok(Self {
            kind: ModelKind::Nakagami { m },
        })
    }

    pub fn mimo_white(n_t: usize, n_r: usize) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(invalid("antenna counts must be >= 1"));
        }
        Ok(Self {
            kind: ModelKind::MimoWhite { n_t, n_r },
        })
    }

    pub fn mimo_correlated(spec: CovarianceSpec) -> Self {
        Self {
            kind: ModelKind::MimoCorrelated(Box::new(spec)),
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Rayleigh => "rayleigh",
            ModelKind::Rician { .. } => "rician",
            ModelKind::Nakagami { .. } => "nakagami",
            ModelKind::MimoWhite { .. } => "mimo_white",
            ModelKind::MimoCorrelated(_) => "mimo_correlated",
        }
    }

    /// `E[J̇(0, S)]`; its reciprocal is the wideband minimum energy per nat.
    pub fn mean_rate_derivative(&self) -> f64 {
        match &self.kind {
            ModelKind::Rayleigh | ModelKind::Rician { .. } | ModelKind::Nakagami { .. } => 1.0,
            ModelKind::MimoWhite { n_r, .. } => *n_r as f64,
            ModelKind::MimoCorrelated(spec) => spec.mean_rate_derivative(),
        }
    }

    pub fn eta_bar(&self) -> f64 {
        1.0 / self.mean_rate_derivative()
    }

    /// Supremum of the region where `Λ` is finite (`+inf` if unbounded).
    pub fn mgf_domain_bound(&self) -> f64 {
        match &self.kind {
            ModelKind::Rayleigh => 1.0,
            ModelKind::Rician { kappa } => 1.0 / (1.0 - kappa * kappa),
            ModelKind::Nakagami { m } => *m,
            ModelKind::MimoWhite { n_t, .. } => *n_t as f64,
            ModelKind::MimoCorrelated(spec) => spec.mgf_domain_bound(),
        }
    }

    /// `Λ(λ) = log E[exp(λ J̇)]`. Rejects `λ` at or beyond the domain boundary.
    pub fn log_mgf(&self, lambda: f64) -> Result<f64> {
        let bound = self.mgf_domain_bound();
        if lambda.is_nan() || lambda >= bound {
            return Err(Error::MgfDomain { lambda, bound });
        }
        Ok(self.log_mgf_unchecked(lambda))
    }

    pub(crate) fn log_mgf_unchecked(&self, lambda: f64) -> f64 {
        match &self.kind {
            ModelKind::Rayleigh => -(-lambda).ln_1p(),
            ModelKind::Rician { kappa } => {
                let c = kappa * kappa;
                let s = 1.0 - c;
                c * lambda / (1.0 - s * lambda) - (-s * lambda).ln_1p()
            }
            ModelKind::Nakagami { m } => -m * (-lambda / m).ln_1p(),
            ModelKind::MimoWhite { n_t, n_r } => {
                let nt = *n_t as f64;
                -(nt * *n_r as f64) * (-lambda / nt).ln_1p()
            }
            ModelKind::MimoCorrelated(spec) => spec.log_mgf_unchecked(lambda),
        }
    }

    /// `Λ'(λ)`, analytic per family.
    pub fn log_mgf_derivative(&self, lambda: f64) -> f64 {
        match &self.kind {
            ModelKind::Rayleigh => 1.0 / (1.0 - lambda),
            ModelKind::Rician { kappa } => {
                let c = kappa * kappa;
                let s = 1.0 - c;
                let u = 1.0 - s * lambda;
                c / (u * u) + s / u
            }
            ModelKind::Nakagami { m } => 1.0 / (1.0 - lambda / m),
            ModelKind::MimoWhite { n_t, n_r } => *n_r as f64 / (1.0 - lambda / *n_t as f64),
            ModelKind::MimoCorrelated(spec) => spec.log_mgf_derivative(lambda),
        }
    }

    /// `(shape, scale)` when `J̇` is Gamma distributed.
    pub fn gamma_family(&self) -> Option<(f64, f64)> {
        match &self.kind {
            ModelKind::Rayleigh => Some((1.0, 1.0)),
            ModelKind::Nakagami { m } => Some((*m, 1.0 / m)),
            ModelKind::MimoWhite { n_t, n_r } => {
                Some(((n_t * n_r) as f64, 1.0 / *n_t as f64))
            }
            _ => None,
        }
    }

    /// One draw of the channel state.
    pub fn draw_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelState {
        match &self.kind {
            ModelKind::MimoWhite { n_t, n_r } => {
                let h = draw_iid_matrix(*n_r, *n_t, rng);
                let g = (&h * h.adjoint()).scale(1.0 / *n_t as f64);
                ChannelState::Gram(g)
            }
            ModelKind::MimoCorrelated(spec) => ChannelState::Gram(spec.draw_gram(rng)),
            _ => ChannelState::Scalar {
                gain: self.draw_rate_derivative(rng),
            },
        }
    }

    /// One draw of `J̇(0, S)`. Consumes the generator exactly like
    /// [`FadingModel::draw_state`], so both paths see the same channel.
    pub fn draw_rate_derivative<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            ModelKind::Rayleigh => rng.sample(Exp1),
            ModelKind::Rician { kappa } => {
                let sd = ((1.0 - kappa * kappa) * 0.5).sqrt();
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                let re = kappa + sd * x;
                let im = sd * y;
                re * re + im * im
            }
            ModelKind::Nakagami { m } => Gamma::new(*m, 1.0 / m)
                .expect("validated shape")
                .sample(rng),
            ModelKind::MimoWhite { n_t, n_r } => {
                let n = n_t * n_r;
                let sum: f64 = (0..n).map(|_| draw_cn(rng).norm_sqr()).sum();
                sum / *n_t as f64
            }
            ModelKind::MimoCorrelated(spec) => spec.draw_rate_derivative(rng),
        }
    }

    /// `n` i.i.d. draws of `J̇(0, S)`, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<RateDerivative>> {
        if n == 0 {
            return Err(invalid("sample count must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| RateDerivative(self.draw_rate_derivative(&mut rng)))
            .collect())
    }

    /// The exponentially tilted law `p_λ(a) ∝ e^{λa} p(a)`, for Gamma families.
    ///
    /// Tilting `Gamma(k, θ)` by `λ` gives `Gamma(k, θ/(1 - λθ))`.
    pub fn tilted_distribution(&self, lambda: f64) -> Result<Gamma<f64>> {
        if !(lambda < 0.0) {
            return Err(invalid(format!("tilt lambda must be < 0, got {lambda}")));
        }
        let (shape, scale) = self
            .gamma_family()
            .ok_or(Error::TiltingUnavailable(self.name()))?;
        Gamma::new(shape, scale / (1.0 - lambda * scale))
            .map_err(|e| invalid(format!("tilted gamma: {e}")))
    }

    /// Draws from the tilted law with log importance weights
    /// `-λa + Λ(λ)`, so that weighted averages are unbiased for the original law.
    pub fn tilted_sample(
        &self,
        lambda: f64,
        n: usize,
        seed: u64,
    ) -> Result<Vec<(RateDerivative, f64)>> {
        if n == 0 {
            return Err(invalid("sample count must be >= 1"));
        }
        let dist = self.tilted_distribution(lambda)?;
        let log_mgf = self.log_mgf(lambda)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let a = dist.sample(&mut rng);
                (RateDerivative(a), -lambda * a + log_mgf)
            })
            .collect())
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        match &self.kind {
            ModelKind::Rayleigh => ModelDescriptor::Rayleigh,
            ModelKind::Rician { kappa } => ModelDescriptor::Rician { kappa: *kappa },
            ModelKind::Nakagami { m } => ModelDescriptor::Nakagami { m: *m },
            ModelKind::MimoWhite { n_t, n_r } => ModelDescriptor::MimoWhite {
                n_t: *n_t,
                n_r: *n_r,
            },
            ModelKind::MimoCorrelated(spec) => ModelDescriptor::MimoCorrelated {
                n_t: spec.n_t(),
                n_r: spec.n_r(),
                psi: linalg::to_pairs(spec.psi()),
                sigma: linalg::to_pairs(spec.sigma()),
            },
        }
    }
}

/// `CN(0, 1)`.
pub(crate) fn draw_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Complex64::new(x * FRAC_1_SQRT_2, y * FRAC_1_SQRT_2)
}

fn draw_iid_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // Row-major fill to match `draw_rate_derivative`'s consumption order.
    let mut h = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            h[(i, j)] = draw_cn(rng);
        }
    }
    h
}

/// JSON form of a [`FadingModel`], e.g. `{"kind": "rician", "kappa": 0.9}`.
///
/// Matrices are row-major nested arrays of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", remote = "ModelDescriptor")]
pub enum ModelDescriptor {
    Rayleigh,
    Rician {
        kappa: f64,
    },
    Nakagami {
        m: f64,
    },
    MimoWhite {
        n_t: usize,
        n_r: usize,
    },
    MimoCorrelated {
        n_t: usize,
        n_r: usize,
        psi: Vec<Vec<[f64; 2]>>,
        sigma: Vec<Vec<[f64; 2]>>,
    },
}

impl Serialize for ModelDescriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDescriptor::serialize(self, s)
    }
}

impl<'de> Deserialize<'de> for ModelDescriptor {
    /// Tracks the field path inside the variant, which internal tagging loses.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(d)?;
        let kind = value
            .get("kind")
            .ok_or_else(|| D::Error::missing_field("kind"))?
            .clone();
        let mut fields = match value {
            serde_json::Value::Object(map) => map,
            _ => return Err(D::Error::custom("model descriptor must be a JSON object")),
        };
        fields.remove("kind");
        let kind = kind
            .as_str()
            .ok_or_else(|| D::Error::custom("`kind` must be a string"))?
            .to_string();
        let mut tagged = serde_json::Map::new();
        tagged.insert(kind, serde_json::Value::Object(fields));
        serde_path_to_error::deserialize(serde_json::Value::Object(tagged))
            .map(|ExternallyTagged(m)| m)
            .map_err(|e| {
                let path = e.path().to_string();
                let inner = path.split_once('.').map_or("", |(_, rest)| rest).to_string();
                if inner.is_empty() {
                    D::Error::custom(e.into_inner())
                } else {
                    D::Error::custom(format!("{inner}: {}", e.into_inner()))
                }
            })
    }
}

struct ExternallyTagged(ModelDescriptor);

impl<'de> Deserialize<'de> for ExternallyTagged {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "snake_case", deny_unknown_fields)]
        enum Ext {
            Rayleigh {},
            Rician { kappa: f64 },
            Nakagami { m: f64 },
            MimoWhite { n_t: usize, n_r: usize },
            MimoCorrelated {
                n_t: usize,
                n_r: usize,
                psi: Vec<Vec<[f64; 2]>>,
                sigma: Vec<Vec<[f64; 2]>>,
            },
        }
        Ok(ExternallyTagged(match Ext::deserialize(d)? {
            Ext::Rayleigh {} => ModelDescriptor::Rayleigh,
            Ext::Rician { kappa } => ModelDescriptor::Rician { kappa },
            Ext::Nakagami { m } => ModelDescriptor::Nakagami { m },
            Ext::MimoWhite { n_t, n_r } => ModelDescriptor::MimoWhite { n_t, n_r },
            Ext::MimoCorrelated { n_t, n_r, psi, sigma } => {
                ModelDescriptor::MimoCorrelated { n_t, n_r, psi, sigma }
            }
        }))
    }
}

impl ModelDescriptor {
    pub fn build(&self) -> Result<FadingModel> {
        match self {
            ModelDescriptor::Rayleigh => Ok(FadingModel::rayleigh()),
            ModelDescriptor::Rician { kappa } => FadingModel::rician(*kappa),
            ModelDescriptor::Nakagami { m } => FadingModel::nakagami(*m),
            ModelDescriptor::MimoWhite { n_t, n_r } => FadingModel::mimo_white(*n_t, *n_r),
            ModelDescriptor::MimoCorrelated {
                n_t,
                n_r,
                psi,
                sigma,
            } => {
                let corr = SpatialCorrelation::new(*n_t, *n_r, linalg::from_pairs(psi)?)?;
                let spec = CovarianceSpec::new(corr, linalg::from_pairs(sigma)?)?;
                Ok(FadingModel::mimo_correlated(spec))
            }
        }
    }
}

/// Deserializes JSON, reporting the failing field path on error.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Descriptor {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn parse_model(text: &str) -> Result<FadingModel> {
    parse_json::<ModelDescriptor>(text)?.build()
}
