//! Descriptive statistics. Quantiles use linear interpolation between order
//! statistics (Hyndman and Fan type 7) everywhere.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn mean<F: Real>(xs: &[F]) -> F {
    xs.iter().copied().sum::<F>() / F::from_count(xs.len())
}

/// Sample variance with denominator `n - 1`.
pub fn variance<F: Real>(xs: &[F]) -> F {
    let m = mean(xs);
    let ss: F = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    ss / F::from_count(xs.len() - 1)
}

pub fn std_dev<F: Real>(xs: &[F]) -> F {
    variance(xs).sqrt()
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted<F: Real>(sorted: &[F], q: F) -> F {
    let n = sorted.len();
    let h = F::from_count(n - 1) * q;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    let frac = h - lo;
    if i + 1 < n {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Type-7 quantile; NaNs are rejected.
pub fn quantile<F: Real>(xs: &[F], q: F) -> Result<F> {
    if xs.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("NaN in quantile input".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile_sorted(&v, q))
}

pub fn median<F: Real>(xs: &[F]) -> Result<F> {
    quantile(xs, F::lit(0.5))
}

/// Median absolute deviation from the median (unscaled).
pub fn mad<F: Real>(xs: &[F]) -> Result<F> {
    let m = median(xs)?;
    let dev: Vec<F> = xs.iter().map(|&x| (x - m).abs()).collect();
    median(&dev)
}

pub fn iqr<F: Real>(xs: &[F]) -> Result<F> {
    Ok(quantile(xs, F::lit(0.75))? - quantile(xs, F::lit(0.25))?)
}

/// Moment skewness `m3 / m2^{3/2}`.
pub fn skewness<F: Real>(xs: &[F]) -> F {
    let m = mean(xs);
    let n = F::from_count(xs.len());
    let m2: F = xs.iter().map(|&x| (x - m).powi(2)).sum::<F>() / n;
    let m3: F = xs.iter().map(|&x| (x - m).powi(3)).sum::<F>() / n;
    m3 / m2.powf(F::lit(1.5))
}

/// OLS slope of `ys` on `1..=n`.
pub fn ols_slope<F: Real>(ys: &[F]) -> F {
    let n = ys.len();
    let tbar = F::from_count(n + 1) / F::lit(2.0);
    let ybar = mean(ys);
    let (mut sxy, mut sxx) = (F::zero(), F::zero());
    for (i, &y) in ys.iter().enumerate() {
        let dt = F::from_count(i + 1) - tbar;
        sxy = sxy + dt * (y - ybar);
        sxx = sxx + dt * dt;
    }
    sxy / sxx
}
