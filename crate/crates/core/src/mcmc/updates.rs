//! Full-conditional updates for `gamma`, `sigma2`, `w` and `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ChainState, McmcConfig};
use crate::basis::DesignMatrix;
use crate::error::Result;
use crate::graph::{neighbor_label_counts, normalize_log_weights, sample_categorical, SpatialNetwork};
use crate::linalg::{Cholesky, Matrix};
use crate::panel::TimeSeriesPanel;
use crate::samplers::{sample_inv_gamma, sample_mvn_canonical, sample_w_conditional, tau_omega};
use crate::scalar::Real;

/// `Psi gamma_k` for every cluster.
pub(crate) fn fitted_curves<F: Real>(state: &ChainState<F>, design: &DesignMatrix<F>) -> Vec<Vec<F>> {
    state.gamma.iter().map(|g| design.fitted(g)).collect()
}

/// Precision `S_k^{-1} = I/g + sum_i Psi' W_i Psi` and the vector
/// `sum_i Psi' W_i u_i` over the members of cluster `k`, where
/// `W_i = diag(1/(sigma_k^2 omega^2 w_it))` and `u_it = y_it - tau sigma_k w_it`.
fn gamma_normal_equations<F: Real>(
    state: &ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    cfg: &McmcConfig<F>,
    k: usize,
) -> (Matrix<F>, Vec<F>) {
    let (tau, omega2) = tau_omega(cfg.p);
    let (t_len, p) = (panel.n_times(), design.n_columns());
    let sigma2 = state.sigma2[k];
    let sigma = sigma2.sqrt();
    let scale = F::one() / (sigma2 * omega2);
    // Psi is shared by all series, so aggregate the weights per time first
    let mut weight = vec![F::zero(); t_len];
    let mut weighted_u = vec![F::zero(); t_len];
    for (i, _) in state.c.iter().enumerate().filter(|(_, &l)| l == k) {
        let y = panel.series(i);
        let w = &state.w[i * t_len..(i + 1) * t_len];
        for t in 0..t_len {
            let wt = scale / w[t];
            let u = y[t] - tau * sigma * w[t];
            weight[t] = weight[t] + wt;
            weighted_u[t] = weighted_u[t] + wt * u;
        }
    }
    let mut prec = Matrix::zeros(p, p);
    let mut rhs = vec![F::zero(); p];
    for t in 0..t_len {
        if weight[t] == F::zero() {
            continue;
        }
        let row = design.row(t);
        prec.add_outer_upper(row, weight[t]);
        for (r, &x) in rhs.iter_mut().zip(row) {
            *r = *r + x * weighted_u[t];
        }
    }
    prec.mirror_upper();
    let inv_g = F::one() / cfg.prior_g;
    for a in 0..p {
        prec[(a, a)] = prec[(a, a)] + inv_g;
    }
    (prec, rhs)
}

/// Mean `m_k` and precision `S_k^{-1}` of the Gaussian full conditional of
/// `gamma_k`.
pub fn gamma_conditional<F: Real>(
    state: &ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    cfg: &McmcConfig<F>,
    k: usize,
) -> Result<(Vec<F>, Matrix<F>)> {
    let (prec, rhs) = gamma_normal_equations(state, panel, design, cfg, k);
    let chol = Cholesky::with_jitter(&prec)?;
    Ok((chol.solve(&rhs), prec))
}

/// Draws every `gamma_k` from its Gaussian full conditional.
pub fn update_gamma<F: Real, R: Rng + ?Sized>(
    state: &mut ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    cfg: &McmcConfig<F>,
    rng: &mut R,
) -> Result<()> {
    for k in 0..state.k() {
        let (prec, rhs) = gamma_normal_equations(state, panel, design, cfg, k);
        let chol = Cholesky::with_jitter(&prec)?;
        let (draw, _) = sample_mvn_canonical(&chol, &rhs, rng);
        state.gamma[k] = draw;
    }
    Ok(())
}

/// Shape `s1` and scale `d1` of the inverse-gamma full conditional of
/// `sigma2_k`.
pub fn sigma2_conditional<F: Real>(
    state: &ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    cfg: &McmcConfig<F>,
    k: usize,
) -> (F, F) {
    let (tau, omega2) = tau_omega(cfg.p);
    let t_len = panel.n_times();
    let fitted = design.fitted(&state.gamma[k]);
    let sigma = state.sigma2[k].sqrt();
    let mut n_k = 0usize;
    let mut ss = F::zero();
    for (i, _) in state.c.iter().enumerate().filter(|(_, &l)| l == k) {
        n_k += 1;
        let y = panel.series(i);
        let w = &state.w[i * t_len..(i + 1) * t_len];
        for t in 0..t_len {
            let d = y[t] - tau * sigma * w[t] - fitted[t];
            ss = ss + d * d / w[t];
        }
    }
    let s1 = cfg.prior_s0 + F::from_count(n_k * t_len) / F::lit(2.0);
    let d1 = cfg.prior_d0 + ss / (F::lit(2.0) * omega2);
    (s1, d1)
}

pub fn update_sigma2<F: Real, R: Rng + ?Sized>(
    state: &mut ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    cfg: &McmcConfig<F>,
    rng: &mut R,
) -> Result<()> {
    for k in 0..state.k() {
        let (s1, d1) = sigma2_conditional(state, panel, design, cfg, k);
        state.sigma2[k] = sample_inv_gamma(s1, d1, rng)?;
    }
    Ok(())
}

/// Redraws every latent weight from its GIG(1/2, a, b) conditional. Each
/// site gets its own random stream derived from one draw of `rng`, so the
/// result does not depend on how rows are split across threads.
pub fn update_w<F: Real, R: Rng + ?Sized>(
    state: &mut ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    cfg: &McmcConfig<F>,
    rng: &mut R,
) {
    let (tau, omega2) = tau_omega(cfg.p);
    let t_len = panel.n_times();
    let fitted = fitted_curves(state, design);
    let sigma: Vec<F> = state.sigma2.iter().map(|s| s.sqrt()).collect();
    let block_seed: u64 = rng.random();
    let c = &state.c;
    state
        .w
        .par_chunks_mut(t_len)
        .enumerate()
        .for_each(|(i, w_row)| {
            let mut site_rng = ChaCha8Rng::seed_from_u64(block_seed);
            site_rng.set_stream(i as u64);
            let k = c[i];
            let y = panel.series(i);
            for t in 0..t_len {
                let resid = y[t] - fitted[k][t];
                w_row[t] = sample_w_conditional(resid, sigma[k], tau, omega2, &mut site_rng);
            }
        });
}

#[inline]
fn log_weights_into<F: Real>(
    i: usize,
    state: &ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    fitted: &[Vec<F>],
    net: &SpatialNetwork,
    p: F,
    counts: &mut [usize],
    out: &mut [F],
) {
    let (tau, omega2) = tau_omega(p);
    let t_len = panel.n_times();
    let y = panel.series(i);
    let w = &state.w[i * t_len..(i + 1) * t_len];
    neighbor_label_counts(i, &state.c, net, counts);
    let half_t = F::from_count(t_len) / F::lit(2.0);
    for k in 0..state.k() {
        let sigma2 = state.sigma2[k];
        let shift = tau * sigma2.sqrt();
        let f = &fitted[k];
        let mut q = F::zero();
        for t in 0..t_len {
            let d = y[t] - shift * w[t] - f[t];
            q = q + d * d / w[t];
        }
        out[k] = -q / (F::lit(2.0) * sigma2 * omega2) - half_t * sigma2.ln()
            + state.potts.alpha[k]
            + state.potts.beta[k] * F::from_count(counts[k]);
    }
}

/// Unnormalized log full conditional of `c_i` over the `K` labels:
/// `-1/2 sum_t (u_itk - psi(t)'gamma_k)^2 / (w_it sigma_k^2 omega^2)
///  - (T/2) log sigma_k^2 + alpha_k + beta_k n_{k,i}` with
/// `u_itk = y_it - tau sigma_k w_it`.
pub fn membership_log_weights<F: Real>(
    i: usize,
    state: &ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    net: &SpatialNetwork,
    cfg: &McmcConfig<F>,
) -> Vec<F> {
    let fitted = fitted_curves(state, design);
    let mut counts = vec![0; state.k()];
    let mut out = vec![F::zero(); state.k()];
    log_weights_into(i, state, panel, &fitted, net, cfg.p, &mut counts, &mut out);
    out
}

/// One sequential Gibbs scan over the sites.
pub fn update_memberships<F: Real, R: Rng + ?Sized>(
    state: &mut ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    net: &SpatialNetwork,
    cfg: &McmcConfig<F>,
    rng: &mut R,
) {
    let fitted = fitted_curves(state, design);
    let k = state.k();
    let mut counts = vec![0; k];
    let mut probs = vec![F::zero(); k];
    for i in 0..panel.n_sites() {
        log_weights_into(i, state, panel, &fitted, net, cfg.p, &mut counts, &mut probs);
        normalize_log_weights(&mut probs);
        state.c[i] = sample_categorical(&probs, rng);
    }
}
