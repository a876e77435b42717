//! Frequentist quantile regression used for basis selection and for the
//! starting state of the sampler.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::basis::{build_modulation_design, DesignMatrix};
use crate::error::{Error, Result};
use crate::graph::PottsParams;
use crate::linalg::{Cholesky, Matrix};
use crate::mcmc::{ChainState, McmcConfig};
use crate::panel::TimeSeriesPanel;
use crate::samplers::{check_level, check_loss};
use crate::scalar::Real;

/// Smoothing half-width of the absolute value in the IRLS surrogate.
pub const IRLS_EPSILON: f64 = 1e-6;
pub const IRLS_TOLERANCE: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit<F> {
    pub gamma_hat: Vec<F>,
    /// Check-loss sum at `gamma_hat`.
    pub loss: F,
    pub p: F,
    pub iterations: usize,
    pub converged: bool,
}

/// `sum_t rho_p(y_t - psi(t)' gamma)` over every series.
pub fn total_check_loss<F: Real>(series: &[&[F]], design: &DesignMatrix<F>, gamma: &[F], p: F) -> F {
    let fitted = design.fitted(gamma);
    series
        .iter()
        .map(|y| {
            y.iter()
                .zip(&fitted)
                .map(|(&v, &f)| check_loss(v - f, p))
                .sum::<F>()
        })
        .sum()
}

/// Smoothed objective `sum 1/2 |r|_eps + (p - 1/2) r`, where `|r|_eps` is
/// the Huber-type smoothing of `|r|` on `(-eps, eps)`.
fn smoothed_objective<F: Real>(resid: &[F], p: F, eps: F) -> F {
    let half = F::lit(0.5);
    resid
        .iter()
        .map(|&r| {
            let a = r.abs();
            let abs_eps = if a < eps { r * r / (eps + eps) + eps * half } else { a };
            half * abs_eps + (p - half) * r
        })
        .sum()
}

/// Check-loss fit of one coefficient vector shared by every series in
/// `series`, by iteratively reweighted least squares on the smoothed loss.
/// Each step minimizes a quadratic majorizer, so the smoothed objective is
/// nonincreasing.
pub fn fit_quantile_pooled<F: Real>(
    series: &[&[F]],
    design: &DesignMatrix<F>,
    p: F,
) -> Result<QuantileFit<F>> {
    check_level(p)?;
    let (t_len, n_coef) = (design.n_times(), design.n_columns());
    if series.is_empty() || series.iter().any(|y| y.len() != t_len) {
        return Err(Error::Shape("series length does not match the design".into()));
    }
    if t_len * series.len() < n_coef {
        return Err(Error::invalid(format!(
            "{} observations cannot identify {n_coef} coefficients",
            t_len * series.len()
        )));
    }
    if series.iter().flat_map(|y| y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite observation".into()));
    }
    let eps = F::lit(IRLS_EPSILON);
    let half = F::lit(0.5);
    let n_obs = t_len * series.len();

    // nonzero pattern of each design row; B-spline rows are sparse
    let support: Vec<Vec<usize>> = (0..t_len)
        .map(|t| {
            let row = design.row(t);
            (0..n_coef).filter(|&j| row[j] != F::zero()).collect()
        })
        .collect();
    let solve = |weights: &dyn Fn(usize, usize) -> (F, F)| -> Result<Vec<F>> {
        // weights(i, t) = (v, v * z)
        let mut gram = Matrix::zeros(n_coef, n_coef);
        let mut rhs = vec![F::zero(); n_coef];
        for t in 0..t_len {
            let (mut wv, mut wz) = (F::zero(), F::zero());
            for i in 0..series.len() {
                let (v, vz) = weights(i, t);
                wv = wv + v;
                wz = wz + vz;
            }
            let row = design.row(t);
            let nz = &support[t];
            for (ia, &a) in nz.iter().enumerate() {
                let s = wv * row[a];
                rhs[a] = rhs[a] + row[a] * wz;
                let g = gram.row_mut(a);
                for &b in &nz[ia..] {
                    g[b] = g[b] + s * row[b];
                }
            }
        }
        gram.mirror_upper();
        Ok(Cholesky::with_jitter(&gram)?.solve(&rhs))
    };

    let mut gamma = solve(&|i, t| (F::one(), series[i][t]))?;
    let mut resid = vec![F::zero(); n_obs];
    let fill_resid = |gamma: &[F], resid: &mut [F]| {
        let fitted: Vec<F> = (0..t_len)
            .map(|t| support[t].iter().map(|&j| design.row(t)[j] * gamma[j]).sum())
            .collect();
        for (i, y) in series.iter().enumerate() {
            for t in 0..t_len {
                resid[i * t_len + t] = y[t] - fitted[t];
            }
        }
    };
    fill_resid(&gamma, &mut resid);
    let mut objective = smoothed_objective(&resid, p, eps);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let shift = p - half;
        let next = solve(&|i, t| {
            let v = half / resid[i * t_len + t].abs().max(eps);
            (v, v * series[i][t] + shift)
        })?;
        let mut next_resid = vec![F::zero(); n_obs];
        fill_resid(&next, &mut next_resid);
        let next_objective = smoothed_objective(&next_resid, p, eps);
        if next_objective > objective {
            // rounding only; keep the better point
            converged = true;
            break;
        }
        let change = (objective - next_objective) / objective.abs().max(F::min_positive_value());
        gamma = next;
        resid = next_resid;
        objective = next_objective;
        if change < F::lit(IRLS_TOLERANCE) {
            converged = true;
            break;
        }
    }
    let loss = resid
        .iter()
        .map(|&r| check_loss(r, p))
        .sum();
    Ok(QuantileFit {
        gamma_hat: gamma,
        loss,
        p,
        iterations,
        converged,
    })
}

/// Single-series check-loss fit.
pub fn fit_quantile_regression<F: Real>(y: &[F], design: &DesignMatrix<F>, p: F) -> Result<QuantileFit<F>> {
    if y.len() < design.n_columns() {
        return Err(Error::invalid(format!(
            "{} observations for {} coefficients",
            y.len(),
            design.n_columns()
        )));
    }
    fit_quantile_pooled(&[y], design, p)
}

/// `loss + J log T`.
pub fn bic_series<F: Real>(fit: &QuantileFit<F>, n_coef: usize, n_times: usize) -> F {
    fit.loss + F::from_count(n_coef) * F::from_count(n_times).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicRow<F> {
    pub j1: usize,
    pub j2: usize,
    pub j3: usize,
    pub bic: F,
}

#[derive(Debug, Clone)]
pub struct BasisSelection<F> {
    pub best: (usize, usize, usize),
    pub table: Vec<BicRow<F>>,
    /// Grid points whose fits failed, with the reason; excluded from `table`.
    pub failures: Vec<((usize, usize, usize), String)>,
}

impl<F: Real> BasisSelection<F> {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("J1,J2,J3,BIC\n");
        for r in &self.table {
            writeln!(out, "{},{},{},{:.16e}", r.j1, r.j2, r.j3, r.bic).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// All `(J1, J2, J3)` in `[lo, hi]^3`, `J1` slowest.
pub fn basis_grid(lo: usize, hi: usize) -> Vec<(usize, usize, usize)> {
    let mut g = Vec::new();
    for j1 in lo..=hi {
        for j2 in lo..=hi {
            for j3 in lo..=hi {
                g.push((j1, j2, j3));
            }
        }
    }
    g
}

/// Total BIC of per-series fits for each modulation design in `grid`;
/// returns the minimizing triple and the full table. Grid points are
/// evaluated in parallel and reported in grid order.
pub fn select_basis<F: Real>(
    panel: &TimeSeriesPanel<F>,
    p: F,
    grid: &[(usize, usize, usize)],
    harmonics: usize,
    period: f64,
) -> Result<BasisSelection<F>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty basis grid"));
    }
    let t_len = panel.n_times();
    let results: Vec<Result<F>> = grid
        .par_iter()
        .map(|&(j1, j2, j3)| {
            let design = build_modulation_design::<F>(t_len, j1, j2, j3, harmonics, period)?;
            let mut total = F::zero();
            for i in 0..panel.n_sites() {
                let fit = fit_quantile_regression(panel.series(i), &design, p)?;
                total = total + bic_series(&fit, design.n_columns(), t_len);
            }
            Ok(total)
        })
        .collect();
    let mut table = Vec::new();
    let mut failures = Vec::new();
    for (&(j1, j2, j3), r) in grid.iter().zip(results) {
        match r {
            Ok(bic) => table.push(BicRow { j1, j2, j3, bic }),
            Err(e) => failures.push(((j1, j2, j3), e.to_string())),
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| a.bic.partial_cmp(&b.bic).unwrap_or(std::cmp::Ordering::Equal))
        .map(|r| (r.j1, r.j2, r.j3))
        .ok_or_else(|| Error::Numeric("every grid point failed".into()))?;
    Ok(BasisSelection {
        best,
        table,
        failures,
    })
}

fn sq_dist<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// One Lloyd run from k-means++ seeds; returns labels and inertia.
fn lloyd<F: Real, R: Rng + ?Sized>(points: &[Vec<F>], k: usize, rng: &mut R) -> (Vec<usize>, F) {
    let n = points.len();
    let mut centers: Vec<Vec<F>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<F> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: F = d2.iter().copied().sum();
        let next = if total > F::zero() {
            let u = F::open01(rng) * total;
            let mut acc = F::zero();
            d2.iter()
                .position(|&d| {
                    acc = acc + d;
                    acc >= u
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    sq_dist(p, &centers[a])
                        .partial_cmp(&sq_dist(p, &centers[b]))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        let dim = points[0].len();
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(p) {
                *s = *s + x;
            }
        }
        for l in 0..k {
            if counts[l] > 0 {
                centers[l] = sums[l].iter().map(|&s| s / F::from_count(counts[l])).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    (labels, inertia)
}

/// Best of `restarts` k-means runs; an empty cluster in the winner is
/// filled by splitting the largest cluster along its farthest points.
pub fn kmeans<F: Real, R: Rng + ?Sized>(
    points: &[Vec<F>],
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k == 0 || points.len() < k {
        return Err(Error::invalid(format!("cannot form {k} clusters from {} points", points.len())));
    }
    let mut best: Option<(Vec<usize>, F, bool)> = None;
    for _ in 0..restarts.max(1) {
        let (labels, inertia) = lloyd(points, k, rng);
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let full = counts.iter().all(|&c| c > 0);
        let better = match &best {
            None => true,
            Some((_, bi, bfull)) => (full && !bfull) || (full == *bfull && inertia < *bi),
        };
        if better {
            best = Some((labels, inertia, full));
        }
    }
    let (mut labels, _, _) = best.unwrap();
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let largest = (0..k).max_by_key(|&l| counts[l]).unwrap();
        let members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == largest).collect();
        let dim = points[0].len();
        let mut centroid = vec![F::zero(); dim];
        for &i in &members {
            for (c, &x) in centroid.iter_mut().zip(&points[i]) {
                *c = *c + x / F::from_count(members.len());
            }
        }
        let mut by_dist: Vec<usize> = members.clone();
        by_dist.sort_by(|&a, &b| {
            sq_dist(&points[b], &centroid)
                .partial_cmp(&sq_dist(&points[a], &centroid))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &i in &by_dist[..members.len() / 2] {
            labels[i] = empty;
        }
    }
    Ok(labels)
}

/// Starting state: per-series quantile fits clustered by k-means (10
/// restarts), pooled per-cluster fits for `gamma`, squared mean check loss
/// per observation for `sigma2`, `alpha_k = log(n_k / n_1)` and `beta` from
/// the config. The latent weights start at one draw from their full
/// conditional given the rest of the state.
pub fn init_state<F: Real, R: Rng + ?Sized>(
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    cfg: &McmcConfig<F>,
    rng: &mut R,
) -> Result<ChainState<F>> {
    let k = cfg.k;
    if k < 1 {
        return Err(Error::invalid("need at least one cluster"));
    }
    let t_len = panel.n_times();
    let fits: Vec<Result<QuantileFit<F>>> = (0..panel.n_sites())
        .into_par_iter()
        .map(|i| fit_quantile_regression(panel.series(i), design, cfg.p))
        .collect();
    let coefs = fits
        .into_iter()
        .map(|f| f.map(|f| f.gamma_hat))
        .collect::<Result<Vec<_>>>()?;
    let c = kmeans(&coefs, k, 10, rng)?;

    let mut gamma = Vec::with_capacity(k);
    let mut sigma2 = Vec::with_capacity(k);
    let mut sizes = vec![0usize; k];
    for (l, size) in sizes.iter_mut().enumerate() {
        let members: Vec<&[F]> = (0..panel.n_sites())
            .filter(|&i| c[i] == l)
            .map(|i| panel.series(i))
            .collect();
        *size = members.len();
        let fit = fit_quantile_pooled(&members, design, cfg.p)?;
        // E[rho_p(e)] = sigma under ALD(p, sigma)
        let sigma = fit.loss / F::from_count(members.len() * t_len);
        sigma2.push((sigma * sigma).max(F::epsilon()));
        gamma.push(fit.gamma_hat);
    }
    let alpha = sizes
        .iter()
        .map(|&n| (F::from_count(n) / F::from_count(sizes[0])).ln())
        .collect();
    let beta = vec![cfg.initial_beta(); k];
    let w = vec![F::one(); panel.n_sites() * t_len];
    let mut state = ChainState {
        c,
        gamma,
        sigma2,
        w,
        potts: PottsParams::new(alpha, beta)?,
    };
    crate::mcmc::update_w(&mut state, panel, design, cfg, rng);
    state.check_against(panel, design, cfg)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_simulation_design, ColumnRole};
    use crate::graph::SiteCoords;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn intercept_design(t_len: usize) -> DesignMatrix<f64> {
        DesignMatrix::new(
            Matrix::from_row_major(t_len, 1, vec![1.0; t_len]).unwrap(),
            vec![ColumnRole::Intercept],
        )
        .unwrap()
    }

    #[test]
    fn median_of_odd_sample() {
        let y = [3.0, -1.0, 7.5, 2.0, 10.0, 0.5, 4.0];
        let fit = fit_quantile_regression(&y, &intercept_design(7), 0.5).unwrap();
        assert!((fit.gamma_hat[0] - 3.0).abs() < 1e-6, "{:?}", fit);
        assert!(fit.converged);
    }

    #[test]
    fn upper_quantile_minimizes_check_loss() {
        let y: Vec<f64> = (1..=100).map(f64::from).collect();
        let design = intercept_design(100);
        let fit = fit_quantile_regression(&y, &design, 0.9).unwrap();
        let g = fit.gamma_hat[0];
        assert!((90.0 - 1e-6..=91.0 + 1e-6).contains(&g), "{g}");
        let loss_at = |c: f64| y.iter().map(|&v| check_loss(v - c, 0.9)).sum::<f64>();
        for step in -1000..=1000 {
            let c = g + step as f64 * 0.001;
            assert!(fit.loss <= loss_at(c) + 1e-9);
        }
    }

    #[test]
    fn beats_ordinary_least_squares() {
        let design = build_simulation_design::<f64>(80).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..80)
            .map(|t| {
                let row = design.row(t);
                row[0] + 0.3 * row[1] + f64::std_exp(&mut rng).powi(2)
            })
            .collect();
        for p in [0.2, 0.5, 0.8] {
            let fit = fit_quantile_regression(&y, &design, p).unwrap();
            let ols = fit_quantile_pooled(&[&y], &design, p).unwrap();
            assert_eq!(fit, ols);
            let ols_gamma = {
                let mut g = Matrix::zeros(3, 3);
                let mut r = vec![0.0; 3];
                for t in 0..80 {
                    g.add_outer_upper(design.row(t), 1.0);
                    for j in 0..3 {
                        r[j] += design.row(t)[j] * y[t];
                    }
                }
                g.mirror_upper();
                Cholesky::new(&g).unwrap().solve(&r)
            };
            let ols_loss = total_check_loss(&[&y], &design, &ols_gamma, p);
            assert!(fit.loss <= ols_loss + 1e-9);
            assert!(fit.loss <= total_check_loss(&[&y], &design, &[0.0; 3], p));
        }
    }

    #[test]
    fn bic_examples() {
        let fit = QuantileFit::<f64> {
            gamma_hat: vec![],
            loss: 0.0,
            p: 0.5,
            iterations: 1,
            converged: true,
        };
        assert!((bic_series(&fit, 6, 100) - 27.631_021_115_928_55).abs() < 1e-9);
        assert_eq!(bic_series(&fit, 6, 100), 6.0 * 100f64.ln());
        assert!((bic_series(&fit, 7, 100) - bic_series(&fit, 6, 100) - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn grid_shape() {
        let g = basis_grid(4, 8);
        assert_eq!(g.len(), 125);
        assert_eq!(g[0], (4, 4, 4));
        assert_eq!(g[124], (8, 8, 8));
    }

    #[test]
    fn kmeans_separates_clean_groups() {
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 3) as f64 * 10.0, ((i % 3) * 2) as f64])
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels = kmeans(&pts, 3, 10, &mut rng).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(labels[i] == labels[j], i % 3 == j % 3);
            }
        }
    }

    #[test]
    fn kmeans_fills_empty_clusters() {
        // two distinct points cannot support three nonempty centroids by
        // Lloyd alone
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![(i % 2) as f64]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels = kmeans(&pts, 3, 10, &mut rng).unwrap();
        let mut seen = [false; 3];
        labels.iter().for_each(|&l| seen[l] = true);
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn init_from_noiseless_groups() {
        let design = build_simulation_design::<f64>(40).unwrap();
        let truths = [[1.0, 0.5, 0.25], [1.25, 0.25, 0.5], [1.5, -0.25, 0.5]];
        let sizes = [4usize, 4, 4];
        let mut y = Vec::new();
        let mut truth = Vec::new();
        for (k, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                y.extend(design.fitted(&truths[k]));
                truth.push(k);
            }
        }
        let cells = (0..12).map(|i| (0, i as i64)).collect();
        let ids = (1..=12).map(|i| i.to_string()).collect();
        let panel = TimeSeriesPanel::new(y, 40, ids, SiteCoords::Grid(cells)).unwrap();
        let cfg = McmcConfig::simulation(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = init_state(&panel, &design, &cfg, &mut rng).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(s.c[i] == s.c[j], truth[i] == truth[j]);
            }
        }
        assert!(s.potts.alpha.iter().all(|&a| a == 0.0));
        assert!(s.potts.beta.iter().all(|&b| b == 2.0));
    }
}
