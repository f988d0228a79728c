use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wideband_outage::exponent::{exponent_closed_form, exponent_numeric, rayleigh_closed_form};
use wideband_outage::feedback::{binary_entropy, general_exponent, onoff_envelope, onoff_exponent};
use wideband_outage::linalg::{self, from_real, CMatrix};
use wideband_outage::montecarlo::{RateMode, SamplerKind, SimConfig, SimTarget};
use wideband_outage::{
    correlated_exponent, shape_covariance, CovarianceSpec, FadingModel, ProtocolParams,
    ShapingOptions, SpatialCorrelation,
};

fn closed_form_model() -> impl Strategy<Value = FadingModel> {
    prop_oneof![
        Just(FadingModel::rayleigh()),
        (0.01f64..0.99).prop_map(|k| FadingModel::rician(k).unwrap()),
        (0.5f64..8.0).prop_map(|m| FadingModel::nakagami(m).unwrap()),
        (1usize..5, 1usize..5).prop_map(|(t, r)| FadingModel::mimo_white(t, r).unwrap()),
    ]
}

fn correlation_2x2() -> impl Strategy<Value = SpatialCorrelation> {
    (-0.95f64..0.95, -0.95f64..0.95).prop_map(|(a, b)| {
        let r_t = from_real(2, &[1.0, a, a, 1.0]);
        let r_r = from_real(2, &[1.0, b, b, 1.0]);
        SpatialCorrelation::kronecker(&r_t, &r_r).unwrap()
    })
}

fn sigma_2x2() -> impl Strategy<Value = CMatrix> {
    (0.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0).prop_map(|(p, r, phase)| {
        // Rank-deficient when r = 0 or 1.
        let off = r * (p * (1.0 - p)).sqrt();
        let mut s = from_real(2, &[p, 0.0, 0.0, 1.0 - p]);
        s[(0, 1)] = num_complex::Complex64::from_polar(off, phase * std::f64::consts::PI);
        s[(1, 0)] = s[(0, 1)].conj();
        s
    })
}

fn any_model() -> impl Strategy<Value = FadingModel> {
    prop_oneof![
        closed_form_model(),
        (correlation_2x2(), sigma_2x2())
            .prop_map(|(c, s)| FadingModel::mimo_correlated(CovarianceSpec::new(c, s).unwrap())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exponent_is_a_supremum(model in any_model(), ratio in 1.0f64..50.0, lambda in -20.0f64..0.0) {
        let eta = ratio * model.eta_bar();
        let p = exponent_numeric(&model, eta).unwrap();
        prop_assert!(p.exponent >= 0.0);
        prop_assert!(p.lambda_star <= 0.0);
        let g = lambda / eta - model.log_mgf(lambda).unwrap();
        prop_assert!(p.exponent >= g - 1e-12 * (1.0 + g.abs()));
        let at_star = p.lambda_star / eta - model.log_mgf(p.lambda_star).unwrap();
        prop_assert!((at_star - p.exponent).abs() <= 1e-12 * (1.0 + p.exponent));
    }

    #[test]
    fn exponent_and_tilt_are_monotone(model in any_model(), a in 1.0f64..30.0, b in 1.0f64..30.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let p = exponent_numeric(&model, lo * model.eta_bar()).unwrap();
        let q = exponent_numeric(&model, hi * model.eta_bar()).unwrap();
        prop_assert!(q.exponent >= p.exponent - 1e-12);
        prop_assert!(q.lambda_star <= p.lambda_star + 1e-9 * (1.0 + p.lambda_star.abs()));
    }

    #[test]
    fn closed_form_agrees_with_engine(model in closed_form_model(), ratio in 1.0f64..100.0) {
        let eta = ratio * model.eta_bar();
        let c = exponent_closed_form(&model, eta).unwrap().exponent;
        let n = exponent_numeric(&model, eta).unwrap().exponent;
        prop_assert!((c - n).abs() <= 1e-9, "{c} vs {n}");
    }

    #[test]
    fn log_mgf_is_convex_and_nondecreasing(model in any_model(), l in -30.0f64..-0.01, h in 1e-3f64..0.5) {
        let f = |x: f64| model.log_mgf(x).unwrap();
        prop_assert!(model.log_mgf_derivative(l) >= 0.0);
        prop_assert!(f(l) <= f((l + h).min(0.0)) + 1e-15);
        let mid = f(l);
        let chord = 0.5 * (f(l - h) + f(l + h));
        prop_assert!(chord >= mid - 1e-12 * (1.0 + mid.abs()));
    }

    #[test]
    fn nakagami_is_m_times_rayleigh(m in 0.5f64..10.0, eta in 1.0f64..100.0) {
        let e = exponent_numeric(&FadingModel::nakagami(m).unwrap(), eta).unwrap().exponent;
        prop_assert!((e - m * rayleigh_closed_form(eta)).abs() <= 1e-9 * m.max(1.0));
    }

    #[test]
    fn white_mimo_is_scaled_rayleigh(n_t in 1usize..6, n_r in 1usize..6, ratio in 1.0f64..50.0) {
        let eta = ratio / n_r as f64;
        let e = exponent_numeric(&FadingModel::mimo_white(n_t, n_r).unwrap(), eta).unwrap().exponent;
        let scaled = (n_t * n_r) as f64 * rayleigh_closed_form(n_r as f64 * eta);
        prop_assert!((e - scaled).abs() <= 1e-9 * (n_t * n_r) as f64);
    }

    #[test]
    fn correlated_exponent_is_unitarily_invariant_for_white_psi(theta in 0.0f64..6.28, phi in 0.0f64..6.28,
                                                                  s in sigma_2x2(), ratio in 1.0f64..20.0) {
        let corr = SpatialCorrelation::new(2, 2, linalg::identity(4)).unwrap();
        let (c, sn) = (theta.cos(), theta.sin());
        let e = num_complex::Complex64::from_polar(1.0, phi);
        let mut u = CMatrix::zeros(2, 2);
        u[(0, 0)] = c.into();
        u[(0, 1)] = -sn * e;
        u[(1, 0)] = sn * e.conj();
        u[(1, 1)] = c.into();
        let rotated = linalg::hermitian_part(&(&u * &s * u.adjoint()));
        let a = CovarianceSpec::new(corr.clone(), s).unwrap();
        let b = CovarianceSpec::new(corr, rotated).unwrap();
        let eta = ratio * a.eta_bar();
        let ea = correlated_exponent(&a, eta).unwrap().exponent;
        let eb = correlated_exponent(&b, eta).unwrap().exponent;
        prop_assert!((ea - eb).abs() <= 1e-9 * (1.0 + ea));
    }

    #[test]
    fn onoff_is_dominated_by_envelope(tau in 0.05f64..6.0, ratio in 1.0f64..40.0) {
        let eta = ratio / (tau + 1.0);
        let e = onoff_exponent(tau, eta).unwrap().exponent;
        let (t_opt, env) = onoff_envelope(eta).unwrap();
        prop_assert_eq!(t_opt, 1.0 / eta);
        prop_assert!(env >= e - 1e-9, "tau {} eta {}: {} > envelope {}", tau, eta, e, env);
    }

    #[test]
    fn onoff_is_monotone_in_eta(tau in 0.05f64..6.0, a in 1.0f64..40.0, b in 1.0f64..40.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let e_lo = onoff_exponent(tau, lo / (tau + 1.0)).unwrap().exponent;
        let e_hi = onoff_exponent(tau, hi / (tau + 1.0)).unwrap().exponent;
        prop_assert!(e_hi >= e_lo - 1e-12);
    }

    #[test]
    fn general_reduces_to_onoff(tau in 0.1f64..4.0, ratio in 1.0f64..20.0) {
        let eta = ratio / (tau + 1.0);
        let g = general_exponent(&ProtocolParams::on_off(tau).unwrap(), eta).unwrap().exponent;
        let o = onoff_exponent(tau, eta).unwrap().exponent;
        prop_assert!((g - o).abs() <= 1e-6, "{} vs {}", g, o);
    }

    #[test]
    fn general_exponent_is_nonnegative(tau in 0.1f64..4.0, g0 in 0.0f64..1.0, ratio in 1.0f64..20.0) {
        let p = ProtocolParams::new(tau, g0).unwrap();
        let eta = ratio * wideband_outage::min_energy_per_nat(&p);
        prop_assert!(general_exponent(&p, eta).unwrap().exponent >= 0.0);
    }

    #[test]
    fn binary_entropy_is_symmetric(x in 0.0f64..=1.0) {
        let h = binary_entropy(x);
        prop_assert!((h - binary_entropy(1.0 - x)).abs() <= 1e-15);
        prop_assert!(h >= 0.0 && h <= std::f64::consts::LN_2 + 1e-15);
    }

    #[test]
    fn exact_rate_is_below_linearized(model in any_model(), seed in any::<u64>(), k in 1usize..40, rho in 0.01f64..20.0) {
        let cfg = SimConfig {
            target: SimTarget::Model(model),
            rho,
            eta: 1.0,
            k_grid: vec![k],
            trials: 100,
            mode: RateMode::Exact,
            sampler: SamplerKind::Plain,
            seed,
            min_outage: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (exact, linear) = cfg.draw_rate_pair(k, &mut rng);
        prop_assert!(exact <= linear * (1.0 + 1e-12) + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn shaping_never_loses_to_white_input(corr in correlation_2x2(), ratio in 1.0f64..8.0, seed in 0u64..1000) {
        let eta = ratio * corr.min_eta_bar();
        let white = CovarianceSpec::white(corr.clone()).unwrap();
        let opts = ShapingOptions { starts: 4, seed, ..ShapingOptions::default() };
        let r = shape_covariance(&corr, eta, &opts).unwrap();
        if eta >= white.eta_bar() {
            let w = correlated_exponent(&white, eta).unwrap().exponent;
            prop_assert!(r.exponent >= w - 1e-10, "{} < white {}", r.exponent, w);
        }
        prop_assert!(r.eta_bar <= eta * (1.0 + 1e-9));
        prop_assert!((linalg::trace_re(&r.sigma_opt) - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn rician_exponent_grows_with_kappa() {
    for eta in [2.0, 4.0, 10.0] {
        let mut prev = rayleigh_closed_form(eta);
        for kappa in [0.3, 0.5, 0.7, 0.9, 0.99] {
            let e = exponent_numeric(&FadingModel::rician(kappa).unwrap(), eta).unwrap().exponent;
            assert!(e >= prev - 1e-12, "eta {eta} kappa {kappa}: {e} < {prev}");
            prev = e;
        }
    }
}

#[test]
fn correlated_white_identity_matches_white_closed_form() {
    for n_t in [1, 2, 4] {
        for n_r in [1, 2, 4] {
            let corr = SpatialCorrelation::new(n_t, n_r, linalg::identity(n_t * n_r)).unwrap();
            let spec = CovarianceSpec::white(corr).unwrap();
            assert_eq!(spec.eta_bar(), 1.0 / n_r as f64);
            let white = FadingModel::mimo_white(n_t, n_r).unwrap();
            for ratio in [1.0, 1.5, 3.0, 10.0, 100.0] {
                let eta = ratio / n_r as f64;
                let a = correlated_exponent(&spec, eta).unwrap().exponent;
                let b = exponent_closed_form(&white, eta).unwrap().exponent;
                assert!((a - b).abs() <= 1e-9, "({n_t},{n_r}) eta {eta}: {a} vs {b}");
            }
        }
    }
}
