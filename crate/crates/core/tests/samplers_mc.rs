//! Monte-Carlo and quadrature checks of the random variate generators.

use quantclust::linalg::Matrix;
use quantclust::samplers::{
    ald_logpdf, ald_sample, sample_inv_gamma, sample_inverse_gaussian, sample_mvn,
    sample_truncated_normal, sample_w_conditional, tau_omega, w_conditional_params, AldParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

#[test]
fn ald_density_puts_mass_p_below_zero() {
    for p in [0.1, 0.5, 0.9] {
        let params = AldParams::new(p, 1.0).unwrap();
        // the left tail decays like exp((1-p) e), so 60/(1-p) is far enough
        let lo = -60.0 / (1.0 - p);
        let mass = simpson(|e| ald_logpdf(e, &params).exp(), lo, 0.0, 400_000);
        assert!((mass - p).abs() < 1e-6, "p={p}: {mass}");
    }
}

#[test]
fn ald_draws_put_fraction_p_below_zero() {
    let n = 1_000_000;
    for (s, p) in [0.1, 0.5, 0.9].into_iter().enumerate() {
        let params = AldParams::new(p, 1.0).unwrap();
        let mut r = rng(s as u64);
        let below = (0..n).filter(|_| ald_sample(&params, &mut r) <= 0.0).count();
        let frac = below as f64 / n as f64;
        assert!((frac - p).abs() < 0.01, "p={p}: {frac}");
    }
}

#[test]
fn ald_median_case_is_centered() {
    let params = AldParams::new(0.5, 1.0).unwrap();
    let mut r = rng(11);
    let xs: Vec<f64> = (0..200_000).map(|_| ald_sample(&params, &mut r)).collect();
    let (m, v) = mean_var(&xs);
    assert!(m.abs() < 3.0 * (v / xs.len() as f64).sqrt(), "{m}");
}

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn ald_scale_equivariance() {
    let n = 100_000;
    let one = AldParams::new(0.3, 1.0).unwrap();
    let two = AldParams::new(0.3, 2.0).unwrap();
    let mut r1 = rng(21);
    let mut r2 = rng(22);
    let a: Vec<f64> = (0..n).map(|_| 2.0 * ald_sample(&one, &mut r1)).collect();
    let b: Vec<f64> = (0..n).map(|_| ald_sample(&two, &mut r2)).collect();
    // 0.1% critical value of the two-sample statistic
    let crit = 1.95 * (2.0 / n as f64).sqrt();
    let d = ks_statistic(a, b);
    assert!(d < crit, "{d} >= {crit}");
}

#[test]
fn inverse_gaussian_moments() {
    let (mu, lambda) = (1.5, 2.0);
    let mut r = rng(3);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| sample_inverse_gaussian(mu, lambda, &mut r).unwrap())
        .collect();
    let (m, v) = mean_var(&xs);
    assert!((m / mu - 1.0).abs() < 0.01, "mean {m}");
    let var = mu * mu * mu / lambda;
    assert!((v / var - 1.0).abs() < 0.02, "var {v} vs {var}");
}

#[test]
fn latent_weight_mean_matches_bessel_ratio() {
    let (tau, omega2) = tau_omega(0.3f64);
    let sigma = 0.8;
    let mut means = Vec::new();
    for (s, resid) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let (a, b) = w_conditional_params(resid, sigma, tau, omega2);
        let z = (a * b).sqrt();
        // K_{3/2}(z) / K_{1/2}(z) = 1 + 1/z
        let exact = (b / a).sqrt() * (1.0 + 1.0 / z);
        let mut r = rng(40 + s as u64);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_w_conditional(resid, sigma, tau, omega2, &mut r))
            .collect();
        let (m, _) = mean_var(&xs);
        assert!((m / exact - 1.0).abs() < 0.01, "resid {resid}: {m} vs {exact}");
        means.push(m);
    }
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
}

#[test]
fn inverse_gamma_mean_and_concentration() {
    let mut r = rng(5);
    let xs: Vec<f64> = (0..1_000_000).map(|_| sample_inv_gamma(5.0, 8.0, &mut r).unwrap()).collect();
    assert!(xs.iter().all(|&x| x > 0.0));
    let (m, _) = mean_var(&xs);
    assert!((m / 2.0 - 1.0).abs() < 0.01, "{m}");

    let xs: Vec<f64> = (0..10_000).map(|_| sample_inv_gamma(1e6, 1e6, &mut r).unwrap()).collect();
    let (m, v) = mean_var(&xs);
    assert!((m - 1.0).abs() < 1e-3 && v.sqrt() < 2e-3, "{m} {v}");
}

#[test]
fn mvn_sample_covariance() {
    let n = 100_000;
    let mut r = rng(6);
    let cov = Matrix::<f64>::identity(3);
    let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_mvn(&[0.0; 3], &cov, &mut r).unwrap()).collect();
    for a in 0..3 {
        for b in 0..3 {
            let s = draws.iter().map(|x| x[a] * x[b]).sum::<f64>() / n as f64;
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((s - target).abs() < 0.02, "({a},{b}) {s}");
        }
    }
}

#[test]
fn truncated_normal_means() {
    let mut r = rng(7);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| sample_truncated_normal(0.0, 1.0, 0.0, 1e9, &mut r).unwrap())
        .collect();
    let (m, _) = mean_var(&xs);
    let half_normal = (2.0 / std::f64::consts::PI).sqrt();
    assert!((m / half_normal - 1.0).abs() < 0.01, "{m}");

    let xs: Vec<f64> = (0..200_000)
        .map(|_| sample_truncated_normal(3.0, 4.0, 1.0, 5.0, &mut r).unwrap())
        .collect();
    assert!(xs.iter().all(|&x| x > 1.0 && x < 5.0));
    let (m, v) = mean_var(&xs);
    assert!((m - 3.0).abs() < 3.0 * (v / xs.len() as f64).sqrt(), "{m}");
}
