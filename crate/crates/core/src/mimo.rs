//! Spatially correlated MIMO: outage exponents for a given input covariance and
//! the input covariance-shaping problem.
//!
//! `Ψ` is the `(n_t n_r) x (n_t n_r)` covariance of `vec(H†)`: its `i`-th
//! `n_t`-block is the conjugate-transposed `i`-th row of `H`. With that layout
//! `tr(H Σ H†) = v† (I ⊗ Σ) v` and the derivative `J̇` is a weighted sum of
//! independent unit exponentials with weights `μ = eig(Ψ^{1/2} (I ⊗ Σ) Ψ^{1/2})`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exponent::{legendre_nonpositive, ExponentPoint};
use crate::linalg::{self, CMatrix, PsdEigen};
use crate::models::draw_cn;
use num_complex::Complex64;

const UNIT_DIAGONAL_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-10;

/// A validated spatial correlation `Ψ` with its square root and partial trace.
#[derive(Clone, Debug)]
pub struct SpatialCorrelation {
    n_t: usize,
    n_r: usize,
    psi: CMatrix,
    psi_sqrt: CMatrix,
    /// `Σ_i Ψ_ii`, so that `tr((I ⊗ Σ)Ψ) = tr(Σ P)`.
    partial: CMatrix,
    partial_eig: PsdEigen,
}

impl SpatialCorrelation {
    pub fn new(n_t: usize, n_r: usize, psi: CMatrix) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(invalid("antenna counts must be >= 1"));
        }
        linalg::check_square(&psi, n_t * n_r, "psi")?;
        let eig = linalg::psd_eigen(&psi, "psi")?;
        for i in 0..psi.nrows() {
            let d = psi[(i, i)];
            if (d.re - 1.0).abs() > UNIT_DIAGONAL_TOL || d.im.abs() > UNIT_DIAGONAL_TOL {
                return Err(Error::Matrix(format!(
                    "psi must have unit diagonal (entry {i} is {d})"
                )));
            }
        }
        let psi = linalg::hermitian_part(&psi);
        let psi_sqrt = eig.sqrt();
        let partial = linalg::block_diagonal_sum(&psi, n_t, n_r);
        let partial_eig = linalg::hermitian_eigen_clamped(&partial, "partial trace of psi")?;
        Ok(Self {
            n_t,
            n_r,
            psi,
            psi_sqrt,
            partial,
            partial_eig,
        })
    }

    /// Kronecker model `Ψ = R_r ⊗ R_t` (receive-major blocks).
    pub fn kronecker(r_t: &CMatrix, r_r: &CMatrix) -> Result<Self> {
        let (n_t, n_r) = (r_t.nrows(), r_r.nrows());
        Self::new(n_t, n_r, r_r.kronecker(r_t))
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn psi(&self) -> &CMatrix {
        &self.psi
    }

    pub fn partial_trace(&self) -> &CMatrix {
        &self.partial
    }

    /// Largest achievable `tr((I ⊗ Σ)Ψ)` over trace-one PSD `Σ`.
    pub fn max_mean_rate_derivative(&self) -> f64 {
        self.partial_eig.max()
    }

    /// Smallest `η̄` over trace-one PSD `Σ`.
    pub fn min_eta_bar(&self) -> f64 {
        1.0 / self.max_mean_rate_derivative()
    }

    /// The rank-one `Σ` on the top eigenvector of the partial trace; it minimizes `η̄`.
    pub fn min_eta_bar_sigma(&self) -> CMatrix {
        let u = self.top_eigenvector();
        &u * u.adjoint()
    }

    fn top_eigenvector(&self) -> CMatrix {
        let (idx, _) = self
            .partial_eig
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        self.partial_eig.vectors.columns(idx, 1).into_owned()
    }

    /// `tr((I ⊗ Σ)Ψ)`.
    pub fn mean_rate_derivative(&self, sigma: &CMatrix) -> f64 {
        (sigma * &self.partial).trace().re
    }

    /// Spectrum of `(I ⊗ Σ)Ψ` through the Hermitian `Ψ^{1/2}(I ⊗ Σ)Ψ^{1/2}`.
    pub fn product_eigen(&self, sigma: &CMatrix) -> Result<PsdEigen> {
        let m = linalg::kron_identity(self.n_r, sigma);
        let b = &self.psi_sqrt * m * &self.psi_sqrt;
        linalg::hermitian_eigen_clamped(&linalg::hermitian_part(&b), "(I ⊗ Σ)Ψ")
    }
}

/// An input covariance `Σ` paired with a spatial correlation `Ψ`.
#[derive(Clone, Debug)]
pub struct CovarianceSpec {
    correlation: SpatialCorrelation,
    sigma: CMatrix,
    modes: Vec<f64>,
}

impl CovarianceSpec {
    pub fn new(correlation: SpatialCorrelation, sigma: CMatrix) -> Result<Self> {
        linalg::check_square(&sigma, correlation.n_t, "sigma")?;
        linalg::psd_eigen(&sigma, "sigma")?;
        let tr = linalg::trace_re(&sigma);
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Matrix(format!("sigma must have trace 1, got {tr}")));
        }
        let sigma = linalg::hermitian_part(&sigma);
        let modes = correlation.product_eigen(&sigma)?.values;
        Ok(Self {
            correlation,
            sigma,
            modes,
        })
    }

    /// `Σ = I/n_t`.
    pub fn white(correlation: SpatialCorrelation) -> Result<Self> {
        let n_t = correlation.n_t;
        Self::new(correlation, linalg::identity(n_t).scale(1.0 / n_t as f64))
    }

    pub fn n_t(&self) -> usize {
        self.correlation.n_t
    }

    pub fn n_r(&self) -> usize {
        self.correlation.n_r
    }

    pub fn psi(&self) -> &CMatrix {
        &self.correlation.psi
    }

    pub fn sigma(&self) -> &CMatrix {
        &self.sigma
    }

    pub fn correlation(&self) -> &SpatialCorrelation {
        &self.correlation
    }

    /// Eigenvalues `μ_i` of `(I ⊗ Σ)Ψ`.
    pub fn modes(&self) -> &[f64] {
        &self.modes
    }

    pub fn mean_rate_derivative(&self) -> f64 {
        self.correlation.mean_rate_derivative(&self.sigma)
    }

    pub fn eta_bar(&self) -> f64 {
        1.0 / self.mean_rate_derivative()
    }

    pub fn mu_max(&self) -> f64 {
        self.modes.iter().copied().fold(0.0, f64::max)
    }

    pub fn mgf_domain_bound(&self) -> f64 {
        let mu = self.mu_max();
        if mu > 0.0 {
            1.0 / mu
        } else {
            f64::INFINITY
        }
    }

    /// `-log det(I - λ(I ⊗ Σ)Ψ)`.
    pub(crate) fn log_mgf_unchecked(&self, lambda: f64) -> f64 {
        -self.modes.iter().map(|&mu| (-lambda * mu).ln_1p()).sum::<f64>()
    }

    pub(crate) fn log_mgf_derivative(&self, lambda: f64) -> f64 {
        self.modes.iter().map(|&mu| mu / (1.0 - lambda * mu)).sum()
    }

    /// `d²/dλ² log det(I - λ(I⊗Σ)Ψ) = -Σ μ²/(1 - λμ)²`.
    pub fn inner_second_derivative(&self, lambda: f64) -> f64 {
        -self
            .modes
            .iter()
            .map(|&mu| {
                let d = 1.0 - lambda * mu;
                mu * mu / (d * d)
            })
            .sum::<f64>()
    }

    fn draw_blocks<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<nalgebra::DVector<Complex64>> {
        let n = self.n_t() * self.n_r();
        let z = nalgebra::DVector::from_iterator(n, (0..n).map(|_| draw_cn(rng)));
        let v = &self.correlation.psi_sqrt * z;
        (0..self.n_r())
            .map(|i| v.rows(i * self.n_t(), self.n_t()).into_owned())
            .collect()
    }

    pub(crate) fn draw_rate_derivative<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_blocks(rng)
            .iter()
            .map(|w| (w.adjoint() * &self.sigma * w)[(0, 0)].re)
            .sum()
    }

    /// `H Σ H†` with entries `w_i† Σ w_j`.
    pub(crate) fn draw_gram<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let blocks = self.draw_blocks(rng);
        let n_r = self.n_r();
        let mut g = CMatrix::zeros(n_r, n_r);
        for i in 0..n_r {
            let sw = &self.sigma * &blocks[i];
            for j in 0..n_r {
                g[(j, i)] = (blocks[j].adjoint() * &sw)[(0, 0)];
            }
        }
        g
    }
}

/// `sup_{λ ≤ 0} {λ/η + log det(I - λ(I ⊗ Σ)Ψ)}` with `η̄ = 1/tr((I ⊗ Σ)Ψ)`.
pub fn correlated_exponent(spec: &CovarianceSpec, eta: f64) -> Result<ExponentPoint> {
    modes_exponent(spec.modes(), spec.eta_bar(), eta)
}

fn modes_exponent(modes: &[f64], eta_bar: f64, eta: f64) -> Result<ExponentPoint> {
    legendre_nonpositive(
        eta,
        eta_bar,
        |l| -modes.iter().map(|&mu| (-l * mu).ln_1p()).sum::<f64>(),
        |l| modes.iter().map(|&mu| mu / (1.0 - l * mu)).sum(),
    )
}

#[derive(Clone, Debug)]
pub struct ShapingOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop after this many consecutive iterations improving by less than `tolerance`.
    pub stall_iterations: usize,
    pub tolerance: f64,
    /// Weight of the `max(0, 1/η - tr((I⊗Σ)Ψ))` feasibility penalty.
    pub penalty: f64,
}

impl Default for ShapingOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0,
            max_iterations: 5000,
            stall_iterations: 20,
            tolerance: 1e-10,
            penalty: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    White,
    TopEigenvector,
    Random,
}

#[derive(Clone, Debug, Serialize)]
pub struct StartTrace {
    pub index: usize,
    pub kind: StartKind,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub sigma: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShapingResult {
    #[serde(serialize_with = "serialize_matrix")]
    pub sigma_opt: CMatrix,
    pub eta: f64,
    pub exponent: f64,
    pub eta_bar: f64,
    /// Exponent of `Σ = I/n_t` at the same `η` (zero when white input is infeasible).
    pub white_exponent: f64,
    pub starts: usize,
    pub best_start: usize,
    pub trace: Vec<StartTrace>,
}

fn serialize_matrix<S: serde::Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    linalg::to_pairs(m).serialize(s)
}

struct Evaluation {
    objective: f64,
    exponent: f64,
    gradient: CMatrix,
}

struct Shaper<'a> {
    corr: &'a SpatialCorrelation,
    eta: f64,
    penalty: f64,
}

impl Shaper<'_> {
    fn sigma_of(l: &CMatrix) -> CMatrix {
        let s = l * l.adjoint();
        let t = linalg::trace_re(&s);
        linalg::hermitian_part(&s.scale(1.0 / t))
    }

    /// Penalized objective of `Σ` and its gradient with respect to `Σ`.
    fn evaluate(&self, sigma: &CMatrix, want_gradient: bool) -> Evaluation {
        let mean = self.corr.mean_rate_derivative(sigma);
        let shortfall = 1.0 / self.eta - mean;
        let n_t = self.corr.n_t;
        let eig = self
            .corr
            .product_eigen(sigma)
            .expect("iterates are PSD by construction");
        let (exponent, lambda) = if shortfall > 0.0 {
            (0.0, 0.0)
        } else {
            let p = modes_exponent(&eig.values, 1.0 / mean, self.eta)
                .expect("feasible by check above");
            (p.exponent, p.lambda_star)
        };
        let objective = exponent - self.penalty * shortfall.max(0.0);

        let mut gradient = CMatrix::zeros(n_t, n_t);
        if want_gradient {
            if lambda < 0.0 {
                // Envelope theorem at the inner maximizer λ*:
                // ∇_Σ log det(I - λ(I⊗Σ)Ψ) = -λ Σ_i [Ψ^{1/2}(I - λB)^{-1}Ψ^{1/2}]_ii.
                let inv = eig.reconstruct(|mu| 1.0 / (1.0 - lambda * mu));
                let x = &self.corr.psi_sqrt * inv * &self.corr.psi_sqrt;
                gradient += linalg::block_diagonal_sum(&x, n_t, self.corr.n_r).scale(-lambda);
            }
            if shortfall > 0.0 {
                gradient += self.corr.partial.scale(self.penalty);
            }
        }
        Evaluation {
            objective,
            exponent,
            gradient,
        }
    }

    /// Gradient with respect to `L` for `Σ = LL†/tr(LL†)`.
    fn l_gradient(l: &CMatrix, sigma: &CMatrix, g_sigma: &CMatrix) -> CMatrix {
        let g = linalg::hermitian_part(g_sigma);
        let t = linalg::trace_re(&(l * l.adjoint()));
        let n = g.nrows();
        let shift = (&g * sigma).trace().re;
        let h = (g - linalg::identity(n).scale(shift)).scale(1.0 / t);
        (h * l).scale(2.0)
    }

    fn ascend(&self, mut l: CMatrix, opts: &ShapingOptions) -> (CMatrix, f64, f64, usize) {
        normalize(&mut l);
        let mut sigma = Self::sigma_of(&l);
        let mut eval = self.evaluate(&sigma, true);
        let initial = eval.objective;
        let mut stall = 0;
        let mut iterations = 0;
        while iterations < opts.max_iterations && stall < opts.stall_iterations {
            iterations += 1;
            let grad = Self::l_gradient(&l, &sigma, &eval.gradient);
            if grad.norm() == 0.0 {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = &l + grad.scale(step);
                normalize(&mut trial);
                let trial_sigma = Self::sigma_of(&trial);
                let trial_eval = self.evaluate(&trial_sigma, false);
                if trial_eval.objective > eval.objective {
                    accepted = Some((trial, trial_sigma, trial_eval.objective));
                    break;
                }
                step *= 0.5;
            }
            let Some((trial, trial_sigma, objective)) = accepted else {
                break;
            };
            if objective - eval.objective < opts.tolerance {
                stall += 1;
            } else {
                stall = 0;
            }
            l = trial;
            sigma = trial_sigma;
            eval = self.evaluate(&sigma, true);
            debug_assert!(eval.objective >= objective - 1e-15);
        }
        (sigma, initial, eval.objective, iterations)
    }
}

fn normalize(l: &mut CMatrix) {
    let n = l.norm();
    if n > 0.0 {
        *l /= Complex64::new(n, 0.0);
    }
}

/// Multistart ascent for `max_Σ E(η)` subject to `η̄(Σ) ≤ η`, `Σ ⪰ 0`, `tr Σ = 1`.
///
/// Start 0 is the white input, start 1 the rank-one `η̄`-minimizing beam, the
/// rest random. The returned `Σ` is the best feasible end point; near-ties go
/// to the one closest to `I/n_t` in Frobenius norm.
pub fn shape_covariance(
    corr: &SpatialCorrelation,
    eta: f64,
    opts: &ShapingOptions,
) -> Result<ShapingResult> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    if opts.starts < 2 {
        return Err(invalid("shaping needs at least the white and beamforming starts"));
    }
    let best_eta_bar = corr.min_eta_bar();
    if eta < best_eta_bar * (1.0 - 1e-12) {
        return Err(Error::Infeasible {
            eta,
            best: best_eta_bar,
        });
    }
    let n_t = corr.n_t;
    let shaper = Shaper {
        corr,
        eta,
        penalty: opts.penalty,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut initial: Vec<(StartKind, CMatrix)> = Vec::with_capacity(opts.starts);
    initial.push((StartKind::White, linalg::identity(n_t)));
    let mut beam = CMatrix::zeros(n_t, n_t);
    beam.set_column(0, &corr.top_eigenvector().column(0));
    initial.push((StartKind::TopEigenvector, beam));
    for _ in 2..opts.starts {
        let l = CMatrix::from_fn(n_t, n_t, |_, _| draw_cn(&mut rng));
        initial.push((StartKind::Random, l));
    }

    let runs: Vec<_> = initial
        .into_par_iter()
        .enumerate()
        .map(|(index, (kind, l))| {
            let (sigma, init_obj, final_obj, iterations) = shaper.ascend(l, opts);
            let feasible = corr.mean_rate_derivative(&sigma) >= (1.0 / eta) * (1.0 - 1e-12);
            (index, kind, sigma, init_obj, final_obj, iterations, feasible)
        })
        .collect();

    let white = linalg::identity(n_t).scale(1.0 / n_t as f64);
    let white_exponent = shaper.evaluate(&white, false).exponent;

    let best_value = runs
        .iter()
        .filter(|r| r.6)
        .map(|r| r.4)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best_value.is_finite() {
        return Err(Error::Infeasible {
            eta,
            best: best_eta_bar,
        });
    }
    let tie = opts.tolerance.max(1e-12 * best_value.abs());
    let best = runs
        .iter()
        .filter(|r| r.6 && r.4 >= best_value - tie)
        .min_by(|a, b| {
            linalg::frobenius_distance(&a.2, &white)
                .total_cmp(&linalg::frobenius_distance(&b.2, &white))
                .then(a.0.cmp(&b.0))
        })
        .expect("at least one feasible run");

    let sigma_opt = best.2.clone();
    let spec = CovarianceSpec::new(corr.clone(), sigma_opt.clone())?;
    let point = correlated_exponent(&spec, eta)?;
    let trace = runs
        .iter()
        .map(|r| StartTrace {
            index: r.0,
            kind: r.1,
            initial_objective: r.3,
            final_objective: r.4,
            iterations: r.5,
            feasible: r.6,
            sigma: linalg::to_pairs(&r.2),
        })
        .collect();
    Ok(ShapingResult {
        sigma_opt,
        eta,
        exponent: point.exponent,
        eta_bar: spec.eta_bar(),
        white_exponent,
        starts: opts.starts,
        best_start: best.0,
        trace,
    })
}

/// JSON form of a correlation `Ψ` (extra fields such as `kind` or `sigma` are ignored).
#[derive(Clone, Debug, serde::Deserialize, Serialize)]
pub struct CorrelationDescriptor {
    pub n_t: usize,
    pub n_r: usize,
    pub psi: Vec<Vec<[f64; 2]>>,
}

impl CorrelationDescriptor {
    pub fn build(&self) -> Result<SpatialCorrelation> {
        SpatialCorrelation::new(self.n_t, self.n_r, linalg::from_pairs(&self.psi)?)
    }
}
