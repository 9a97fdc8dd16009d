use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

use stretchwalk_core::density::{preset_models, ExponentModel, Perturbation, PerturbedDensity};
use stretchwalk_core::oracle;
use stretchwalk_core::ratefn::log_mgf;
use stretchwalk_core::sampler::{
    estimate_localization, gibbs_fixed_sum, importance_estimate, rejection_sum_at_least, Method,
    TiltedProposal,
};
use stretchwalk_core::seeds;

/// Kolmogorov-Smirnov distance of a sample from `cdf`.
fn ks<F: Fn(f64) -> f64>(mut xs: Vec<f64>, cdf: F) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// 1% critical value of the one-sample KS statistic.
fn ks_critical(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[test]
fn unconditional_draws_follow_the_density() {
    for (i, m) in preset_models().iter().enumerate() {
        let n = 4000;
        let xs = m.sample_unconditional(n, 100 + i as u64);
        let d = ks(xs, |x| m.cdf(x));
        assert!(d < ks_critical(n), "{}: D = {d}", m.label());
    }
}

#[test]
fn weibull_mean_is_gamma_four_thirds() {
    let m = PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap();
    let exact = gamma(4.0 / 3.0);
    assert!((m.mean() - exact).abs() < 1e-9, "{} vs {exact}", m.mean());
    let xs = m.sample_unconditional(20_000, 5);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    // sd of the Weibull(3) law is about 0.3245
    assert!((mean - exact).abs() < 4.0 * 0.3245 / (xs.len() as f64).sqrt());
}

#[test]
fn mgf_matches_monte_carlo() {
    let m = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
    let xs = m.sample_unconditional(40_000, 17);
    let ws: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
    let mean = ws.iter().sum::<f64>() / ws.len() as f64;
    let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (ws.len() - 1) as f64;
    let se = (var / ws.len() as f64).sqrt();
    let exact = log_mgf(&m, 1.0).unwrap().exp();
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact}");
}

#[test]
fn tilted_proposal_has_the_requested_mean() {
    let m = PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap();
    let p = TiltedProposal::for_mean(&m, 2.0).unwrap();
    let mut rng = seeds::rng(3);
    let n = 20_000;
    let xs: Vec<f64> = (0..n).map(|_| p.draw_one(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    assert!((mean - 2.0).abs() < 5e-3, "{mean}");
}

#[test]
fn pair_gibbs_matches_the_exact_conditional() {
    // g = x^2: X_1 given X_1 + X_2 = s is normal(s/2, 1/4), truncation negligible at s = 6
    let m = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
    let out = gibbs_fixed_sum(&m, 2, 6.0, 3000, 10, 21).unwrap();
    let xs: Vec<f64> = out.iter().map(|s| s.values[0]).collect();
    let normal = Normal::new(3.0, 0.5).unwrap();
    let d = ks(xs, |x| normal.cdf(x));
    assert!(d < ks_critical(3000), "D = {d}");
}

#[test]
fn fixed_sum_chain_is_exchangeable() {
    let m = PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap();
    let out = gibbs_fixed_sum(&m, 4, 8.0, 8000, 100, 2).unwrap();
    for i in 0..4 {
        let mean = out.iter().map(|s| s.values[i]).sum::<f64>() / out.len() as f64;
        assert!((mean - 2.0).abs() < 0.05, "coordinate {i}: {mean}");
    }
    for s in &out {
        assert!(s.is_valid());
    }
}

#[test]
fn importance_sampling_matches_quadrature() {
    let m = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
    let exact = oracle::log_prob_c(&m, 2, 3.0).unwrap();
    let est = importance_estimate(&m, 2, 3.0, 0.5, 20_000, 8).unwrap();
    let ratio = (est.p_c.log_p - exact).exp();
    assert!(
        (ratio - 1.0).abs() < 4.0 * est.p_c.rel_err + 1e-3,
        "ratio {ratio}, rel err {}",
        est.p_c.rel_err
    );
}

#[test]
fn rejection_and_importance_agree() {
    let m = PerturbedDensity::pure(ExponentModel::power(2.0).unwrap()).unwrap();
    let (n, a, eps) = (4, 1.5, 0.4);
    let is = estimate_localization(&m, n, a, eps, Method::TiltedIs, 20_000, 1).unwrap();
    let rej = estimate_localization(&m, n, a, eps, Method::Rejection, 4000, 2).unwrap();
    let se = (is.std_err.powi(2) + rej.std_err.powi(2)).sqrt();
    assert!(
        (is.p_hat - rej.p_hat).abs() < 4.0 * se,
        "{} vs {}",
        is.p_hat,
        rej.p_hat
    );
}

#[test]
fn rejection_draws_exceed_the_level() {
    let m = PerturbedDensity::new(
        ExponentModel::power(3.0).unwrap(),
        Perturbation::Sin { lambda: 0.5 },
    )
    .unwrap();
    let p = TiltedProposal::for_mean(&m, 2.0).unwrap();
    let mut rng = seeds::rng(6);
    for _ in 0..50 {
        let s = rejection_sum_at_least(&p, 6, 2.0, &mut rng, 100_000).unwrap();
        assert!(s.sum() >= 12.0);
        assert!(s.values.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn replication_streams_do_not_depend_on_the_count() {
    let first: Vec<f64> = (0..5).map(|r| seeds::stream_rng(9, r).gen()).collect();
    let more: Vec<f64> = (0..6).map(|r| seeds::stream_rng(9, r).gen()).collect();
    assert_eq!(first[..], more[..5]);
    let other: Vec<f64> = (0..5).map(|r| seeds::stream_rng(10, r).gen()).collect();
    assert_ne!(first, other);
}

#[test]
fn heavier_levels_localize_more_in_a_long_walk() {
    let m = PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap();
    let lo = estimate_localization(&m, 20, 3.0, 0.5, Method::TiltedIs, 20_000, 4).unwrap();
    let hi = estimate_localization(&m, 20, 6.0, 0.5, Method::TiltedIs, 20_000, 4).unwrap();
    assert!(hi.p_hat > lo.p_hat, "{} vs {}", hi.p_hat, lo.p_hat);
}
