//! Densities and random variate generators used by the sampler.

use rand::Rng;
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Smallest absolute residual fed to the latent-scale update.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

/// Asymmetric Laplace parameters: quantile level `p` and scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AldParams<F> {
    p: F,
    sigma: F,
}

impl<F: Real> AldParams<F> {
    pub fn new(p: F, sigma: F) -> Result<Self> {
        check_level(p)?;
        if !(sigma > F::zero()) || !sigma.is_finite() {
            return Err(Error::invalid(format!("ALD scale must be positive, got {sigma}")));
        }
        Ok(Self { p, sigma })
    }

    pub fn p(&self) -> F {
        self.p
    }

    pub fn sigma(&self) -> F {
        self.sigma
    }
}

pub(crate) fn check_level<F: Real>(p: F) -> Result<()> {
    if p > F::zero() && p < F::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("quantile level must lie in (0,1), got {p}")))
    }
}

/// Check loss `u (p - I(u < 0))`.
#[inline]
pub fn check_loss<F: Real>(u: F, p: F) -> F {
    if u < F::zero() {
        u * (p - F::one())
    } else {
        u * p
    }
}

/// `log(p(1-p)/sigma) - rho_p(e/sigma)`.
#[inline]
pub fn ald_logpdf<F: Real>(e: F, params: &AldParams<F>) -> F {
    let p = params.p;
    (p * (F::one() - p) / params.sigma).ln() - check_loss(e / params.sigma, p)
}

/// Mixture constants `tau = (1-2p)/(p(1-p))` and `omega^2 = 2/(p(1-p))`.
#[inline]
pub fn tau_omega<F: Real>(p: F) -> (F, F) {
    let v = p * (F::one() - p);
    ((F::one() - p - p) / v, F::lit(2.0) / v)
}

/// ALD draw through `tau sigma w + omega sigma sqrt(w) nu` with
/// `w ~ Exp(1)`, `nu ~ N(0,1)`.
pub fn ald_sample<F: Real, R: Rng + ?Sized>(params: &AldParams<F>, rng: &mut R) -> F {
    let (tau, omega2) = tau_omega(params.p);
    let w = F::std_exp(rng);
    let nu = F::std_normal(rng);
    params.sigma * (tau * w + omega2.sqrt() * w.sqrt() * nu)
}

/// Inverse Gaussian with mean `mu` and shape `lambda` (Michael, Schucany
/// and Haas transformation with one extra uniform).
pub fn sample_inverse_gaussian<F: Real, R: Rng + ?Sized>(mu: F, lambda: F, rng: &mut R) -> Result<F> {
    if !(mu > F::zero() && lambda > F::zero()) || !mu.is_finite() || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "inverse Gaussian needs positive finite parameters, got mu={mu}, lambda={lambda}"
        )));
    }
    Ok(inverse_gaussian_unchecked(mu, lambda, rng))
}

#[inline]
fn inverse_gaussian_unchecked<F: Real, R: Rng + ?Sized>(mu: F, lambda: F, rng: &mut R) -> F {
    let nu = F::std_normal(rng);
    let y = nu * nu;
    // smaller root of the quadratic, written without cancellation:
    // x = mu / (1 + r + sqrt(r^2 + 2r)), r = mu y / (2 lambda)
    let r = mu * y / (F::lit(2.0) * lambda);
    let x = mu / (F::one() + r + (r * r + r + r).sqrt());
    let u = F::open01(rng);
    let out = if u <= mu / (mu + x) { x } else { mu * mu / x };
    out.max(F::min_positive_value())
}

/// Parameters `(a, b)` of the GIG(1/2, a, b) full conditional of a latent
/// scale, with the residual floored at [`RESIDUAL_FLOOR`].
#[inline]
pub fn w_conditional_params<F: Real>(resid: F, sigma: F, tau: F, omega2: F) -> (F, F) {
    let r = resid.abs().max(F::lit(RESIDUAL_FLOOR));
    let a = (tau * tau + omega2 + omega2) / omega2;
    let b = r * r / (sigma * sigma * omega2);
    (a, b)
}

/// Draw from GIG(1/2, a, b) with `a = (tau^2 + 2 omega^2)/omega^2` and
/// `b = resid^2 / (sigma^2 omega^2)`, as the reciprocal of an inverse
/// Gaussian with shape `a` and mean `sigma sqrt(tau^2 + 2 omega^2)/|resid|`.
#[inline]
pub fn sample_w_conditional<F: Real, R: Rng + ?Sized>(
    resid: F,
    sigma: F,
    tau: F,
    omega2: F,
    rng: &mut R,
) -> F {
    let r = resid.abs().max(F::lit(RESIDUAL_FLOOR));
    let s = tau * tau + omega2 + omega2;
    let lambda = s / omega2;
    let mu = sigma * s.sqrt() / r;
    F::one() / inverse_gaussian_unchecked(mu, lambda, rng)
}

/// Inverse gamma with shape `shape` and scale `scale`: reciprocal of a
/// Gamma(shape, rate = scale) draw. Small shapes are drawn in log space
/// (`G = G' U^{1/shape}`, `G' ~ Gamma(shape + 1)`); the result is clamped
/// to the finite positive range.
pub fn sample_inv_gamma<F: Real, R: Rng + ?Sized>(shape: F, scale: F, rng: &mut R) -> Result<F> {
    if !(shape > F::zero() && scale > F::zero()) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "inverse gamma needs positive parameters, got shape={shape}, scale={scale}"
        )));
    }
    let log_g = if shape < F::one() {
        F::std_gamma(shape + F::one(), rng).ln() + F::open01(rng).ln() / shape
    } else {
        F::std_gamma(shape, rng).ln()
    };
    let x = (scale.ln() - log_g).exp();
    Ok(x.max(F::min_positive_value()).min(F::max_value()))
}

fn standard_normals<F: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<F> {
    (0..n).map(|_| F::std_normal(rng)).collect()
}

/// `mean + L z` with `cov = L L'` (jittered Cholesky).
pub fn sample_mvn<F: Real, R: Rng + ?Sized>(mean: &[F], cov: &Matrix<F>, rng: &mut R) -> Result<Vec<F>> {
    if cov.rows() != mean.len() || cov.cols() != mean.len() {
        return Err(Error::Shape("covariance does not match mean".into()));
    }
    let chol = Cholesky::with_jitter(cov)?;
    let z = standard_normals(mean.len(), rng);
    Ok(chol
        .mul_lower(&z)
        .into_iter()
        .zip(mean)
        .map(|(a, &m)| a + m)
        .collect())
}

/// Draw from `N(Q^{-1} b, Q^{-1})` given the Cholesky factor of the
/// precision `Q`; returns the draw and the mean.
pub fn sample_mvn_canonical<F: Real, R: Rng + ?Sized>(
    precision: &Cholesky<F>,
    b: &[F],
    rng: &mut R,
) -> (Vec<F>, Vec<F>) {
    let mean = precision.solve(b);
    let z = standard_normals(b.len(), rng);
    let dev = precision.solve_upper(&z);
    let draw = mean.iter().zip(&dev).map(|(&m, &d)| m + d).collect();
    (draw, mean)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn norm_isf(q: f64) -> f64 {
    // one Newton step on erfc polishes the inverse
    let y = 2.0 * q;
    let mut x = erfc_inv(y);
    if x.is_finite() {
        let slope = std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp();
        if slope > 0.0 {
            x += (erfc(x) - y) / slope;
        }
    }
    std::f64::consts::SQRT_2 * x
}

/// Probability that `N(mu, var)` falls in `(lo, hi)`.
pub fn normal_interval_mass<F: Real>(mu: F, var: F, lo: F, hi: F) -> F {
    let sd = var.sqrt().as_f64();
    let a = (lo.as_f64() - mu.as_f64()) / sd;
    let b = (hi.as_f64() - mu.as_f64()) / sd;
    let mass = if a > 0.0 {
        norm_sf(a) - norm_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    };
    F::lit(mass)
}

/// `N(mu, var)` conditioned on `(lo, hi)` by inversion of the truncated
/// CDF; works in the upper tail through the survival function so narrow
/// intervals far from `mu` stay accurate.
pub fn sample_truncated_normal<F: Real, R: Rng + ?Sized>(
    mu: F,
    var: F,
    lo: F,
    hi: F,
    rng: &mut R,
) -> Result<F> {
    if !(var > F::zero()) || !(lo < hi) || mu.is_nan() {
        return Err(Error::invalid(format!(
            "truncated normal needs var > 0 and lo < hi, got var={var}, ({lo}, {hi})"
        )));
    }
    let (m, sd) = (mu.as_f64(), var.sqrt().as_f64());
    let (l, h) = (lo.as_f64(), hi.as_f64());
    let a = (l - m) / sd;
    let b = (h - m) / sd;
    let u = F::open01(rng).as_f64();
    // reflect so the interval never sits in the upper tail
    let (a, b, sign) = if a > 0.0 { (-b, -a, -1.0) } else { (a, b, 1.0) };
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    let z = if pb - pa > 0.0 {
        // quantile q of the lower-tail CDF, expressed through the survival
        // function of -z for accuracy
        let q = pa + u * (pb - pa);
        -norm_isf(q)
    } else {
        // interval mass underflows; fall back to a uniform position
        a + u * (b - a)
    };
    let x = m + sign * z * sd;
    let x = if x.is_finite() { x } else { l + u * (h - l) };
    // keep the draw strictly inside the interval
    let eps = (h - l) * 1e-12;
    let x = x.clamp(l + eps, h - eps);
    Ok(F::lit(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn check_loss_examples() {
        assert_eq!(check_loss(2.0, 0.5), 1.0);
        assert_eq!(check_loss(-2.0, 0.5), 1.0);
        assert!((check_loss(-1.0f64, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn logpdf_examples() {
        let prm = AldParams::new(0.5, 1.0).unwrap();
        assert!((ald_logpdf(0.0, &prm) - 0.25f64.ln()).abs() < 1e-15);
        let prm = AldParams::new(0.5, 1.5).unwrap();
        assert!((ald_logpdf(3.0, &prm) - ((0.25f64 / 1.5).ln() - 1.0)).abs() < 1e-15);
        assert!(AldParams::new(1.0, 1.0).is_err());
        assert!(AldParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn tau_omega_examples() {
        assert_eq!(tau_omega(0.5f64), (0.0, 8.0));
        let (t, o) = tau_omega(0.25f64);
        assert!((t - 0.5 / 0.1875).abs() < 1e-14 && (o - 2.0 / 0.1875).abs() < 1e-14);
        for p in [0.1f64, 0.3, 0.45] {
            let (a, _) = tau_omega(p);
            let (b, _) = tau_omega(1.0 - p);
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn w_lambda_at_median() {
        let (tau, omega2) = tau_omega(0.5f64);
        let (a, b) = w_conditional_params(1.0, 1.0, tau, omega2);
        assert_eq!(a, 2.0);
        assert_eq!(b, 1.0 / 8.0);
    }

    #[test]
    fn parameter_errors() {
        let mut r = rng(0);
        assert!(sample_inverse_gaussian(0.0f64, 1.0, &mut r).is_err());
        assert!(sample_inv_gamma(1.0f64, -1.0, &mut r).is_err());
        assert!(sample_truncated_normal(0.0f64, 1.0, 1.0, 1.0, &mut r).is_err());
        let cov = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(sample_mvn(&[0.0, 0.0], &cov, &mut r).is_err());
    }

    #[test]
    fn inverse_gaussian_concentrates() {
        let mut r = rng(5);
        let xs: Vec<f64> = (0..2000)
            .map(|_| sample_inverse_gaussian(2.0, 1e9, &mut r).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| (x - 2.0).abs() < 1e-2));
    }

    #[test]
    fn inv_gamma_positive_and_concentrating() {
        let mut r = rng(6);
        let xs: Vec<f64> = (0..5000)
            .map(|_| sample_inv_gamma(1e4, 1e4, &mut r).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 1.0).abs() < 2e-3);
    }

    #[test]
    fn mvn_degenerate_and_affine() {
        let cov = Matrix::from_rows(&[vec![1e-18f64, 0.0], vec![0.0, 1e-18]]).unwrap();
        let x = sample_mvn(&[3.0, -1.0], &cov, &mut rng(1)).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-6 && (x[1] + 1.0).abs() < 1e-6);

        let cov = Matrix::from_rows(&[vec![2.0f64, 0.3], vec![0.3, 1.0]]).unwrap();
        let a = sample_mvn(&[0.0, 0.0], &cov, &mut rng(2)).unwrap();
        let b = sample_mvn(&[5.0, -2.0], &cov, &mut rng(2)).unwrap();
        assert!((b[0] - a[0] - 5.0).abs() < 1e-12 && (b[1] - a[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_stays_inside() {
        let mut r = rng(3);
        for (mu, lo, hi) in [(0.0, -1.0, 1.0), (0.0, 8.0, 8.001), (5.0, -40.0, -39.9), (9.9, 0.0, 10.0)] {
            for _ in 0..500 {
                let x = sample_truncated_normal(mu, 0.04f64, lo, hi, &mut r).unwrap();
                assert!(x > lo && x < hi, "{x} outside ({lo},{hi})");
            }
        }
    }

    #[test]
    fn inv_gamma_tiny_shape_stays_finite() {
        let mut r = rng(5);
        for _ in 0..10_000 {
            let x: f64 = sample_inv_gamma(0.01, 0.01, &mut r).unwrap();
            assert!(x.is_finite() && x > 0.0);
            let y: f32 = sample_inv_gamma(0.01f32, 0.01, &mut r).unwrap();
            assert!(y.is_finite() && y > 0.0);
        }
    }

    #[test]
    fn interval_mass() {
        let m: f64 = normal_interval_mass(0.0, 1.0, -1.0, 1.0);
        assert!((m - 0.682_689_492_137_086).abs() < 1e-12, "{m}");
        let tail: f64 = normal_interval_mass(0.0, 1.0, 10.0, f64::INFINITY);
        assert!(tail > 0.0 && tail < 1e-22);
    }

    #[test]
    fn samplers_are_seed_deterministic() {
        let draw = |seed| {
            let mut r = rng(seed);
            let prm = AldParams::new(0.3, 0.7).unwrap();
            (
                ald_sample(&prm, &mut r),
                sample_w_conditional(0.4, 0.7, 1.0, 9.0, &mut r),
                sample_truncated_normal(1.0, 0.5, 0.0, 10.0, &mut r).unwrap(),
            )
        };
        assert_eq!(draw(11), draw(11));
    }
}
