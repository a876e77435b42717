//! Likelihood-free Metropolis-Hastings move for the Potts parameters.
//!
//! The Potts normalizing constant is intractable, so the move simulates an
//! auxiliary field under the proposed parameters and only lets the
//! proposal compete when its sufficient statistics land within a tolerance
//! of those of the current memberships.

use rand::Rng;

use super::{ChainState, McmcConfig};
use crate::error::{Error, Result};
use crate::graph::{eta_distance, potts_gibbs_sweep, sufficient_stats, PottsParams, SpatialNetwork};
use crate::samplers::{normal_interval_mass, sample_truncated_normal};
use crate::scalar::Real;
use crate::stats;

/// Outcome of one likelihood-free step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcStep<F> {
    /// Distance between auxiliary and current statistics.
    pub distance: F,
    /// The distance was below the tolerance.
    pub within_tolerance: bool,
    pub accepted: bool,
}

/// Log of the Metropolis-Hastings ratio for a move `current -> proposed`:
/// Gaussian prior on `alpha_2..K`, flat prior on `beta` inside `(0, B)`,
/// symmetric random walk on `alpha` and the truncated-normal correction
/// `mass(beta_k) / mass(beta*_k)` for each moved `beta_k`.
pub(crate) fn log_mh_ratio<F: Real>(
    current: &PottsParams<F>,
    proposed: &PottsParams<F>,
    cfg: &McmcConfig<F>,
    beta_moves: bool,
) -> F {
    let two_a = F::lit(2.0) * cfg.prior_a;
    let log_prior = |alpha: &[F]| -> F { -alpha[1..].iter().map(|&a| a * a).sum::<F>() / two_a };
    let mut r = log_prior(&proposed.alpha) - log_prior(&current.alpha);
    if beta_moves {
        for (&b, &b_star) in current.beta.iter().zip(&proposed.beta) {
            if !(b_star > F::zero() && b_star < cfg.beta_max) {
                return F::neg_infinity();
            }
            let z_cur = normal_interval_mass(b, cfg.prop_var_beta, F::zero(), cfg.beta_max);
            let z_new = normal_interval_mass(b_star, cfg.prop_var_beta, F::zero(), cfg.beta_max);
            r = r + z_cur.ln() - z_new.ln();
        }
    }
    r
}

/// Proposes new field parameters, simulates an auxiliary field from the
/// current memberships with `cfg.aux_sweeps` Gibbs sweeps, and accepts with
/// probability `min(1, r)` when the statistic distance is below
/// `tolerance`. Pass `F::infinity()` to never block on distance.
pub fn update_alpha_beta<F: Real, R: Rng + ?Sized>(
    state: &mut ChainState<F>,
    net: &SpatialNetwork,
    cfg: &McmcConfig<F>,
    tolerance: F,
    rng: &mut R,
) -> Result<AbcStep<F>> {
    let k = state.k();
    let current = &state.potts;
    let sd_alpha = cfg.prop_var_alpha.sqrt();
    let mut alpha = vec![F::zero(); k];
    for j in 1..k {
        alpha[j] = current.alpha[j] + sd_alpha * F::std_normal(rng);
    }
    let beta_moves = cfg.beta_fixed.is_none();
    let beta = if beta_moves {
        current
            .beta
            .iter()
            .map(|&b| sample_truncated_normal(b, cfg.prop_var_beta, F::zero(), cfg.beta_max, rng))
            .collect::<Result<Vec<F>>>()?
    } else {
        current.beta.clone()
    };
    let proposed = PottsParams { alpha, beta };

    let mut aux = state.c.clone();
    for _ in 0..cfg.aux_sweeps {
        potts_gibbs_sweep(&mut aux, &proposed, net, cfg.sweep_order, rng)?;
    }
    let distance: F = eta_distance(
        &sufficient_stats(&aux, net, k)?,
        &sufficient_stats(&state.c, net, k)?,
    )?;
    let within_tolerance = distance < tolerance;
    let mut accepted = false;
    if within_tolerance {
        let log_r = log_mh_ratio(current, &proposed, cfg, beta_moves);
        let u = F::open01(rng);
        if u.ln() < log_r {
            state.potts = proposed;
            accepted = true;
        }
    }
    Ok(AbcStep {
        distance,
        within_tolerance,
        accepted,
    })
}

/// 5th percentile (type 7) of the distances recorded during burn-in.
pub fn calibrate_tolerance<F: Real>(burn_in_distances: &[F]) -> Result<F> {
    if burn_in_distances.is_empty() {
        return Err(Error::invalid("no burn-in distances to calibrate from"));
    }
    stats::quantile(burn_in_distances, F::lit(0.05))
}
