//! Hybrid Metropolis-within-Gibbs sampler for the asymmetric-Laplace
//! mixture with a Potts membership field.
//!
//! One iteration updates, in order, the cluster coefficients `gamma`, the
//! scales `sigma2`, the latent mixing weights `w`, the memberships `c` (one
//! sequential Gibbs scan) and finally the field parameters `(alpha, beta)`
//! through a likelihood-free Metropolis-Hastings step.

mod abc;
mod chain;
mod summary;
mod updates;

pub use abc::{calibrate_tolerance, update_alpha_beta, AbcStep};
pub use chain::{run_chain, series_loglik, PosteriorDraws};
pub use summary::{matching_permutation, posterior_summary, waic, PosteriorSummary};
pub use updates::{
    gamma_conditional, membership_log_weights, sigma2_conditional, update_gamma,
    update_memberships, update_sigma2, update_w,
};

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::graph::{PottsParams, SweepOrder};
use crate::panel::TimeSeriesPanel;
use crate::samplers::check_level;
use crate::scalar::Real;

/// Behavior of the likelihood-free step while the tolerance is being
/// calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BurnInGate {
    /// Distances are recorded, proposals are never accepted.
    #[default]
    Hold,
    /// Distances are recorded, every proposal passes the gate and is
    /// accepted with the Metropolis-Hastings probability.
    Open,
}

/// Sampler settings and prior hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig<F> {
    /// Quantile level.
    pub p: F,
    /// Number of clusters.
    pub k: usize,
    /// Total iterations, burn-in included.
    pub iters: usize,
    pub burn_in: usize,
    /// Prior variance of `alpha_2..alpha_K`.
    pub prior_a: F,
    /// Prior variance of every coefficient.
    pub prior_g: F,
    /// Inverse-gamma shape of the `sigma2` prior.
    pub prior_s0: F,
    /// Inverse-gamma scale of the `sigma2` prior.
    pub prior_d0: F,
    /// Upper bound `B` of the uniform `beta` prior.
    pub beta_max: F,
    pub prop_var_alpha: F,
    pub prop_var_beta: F,
    pub beta_init: F,
    /// Holds every `beta_k` at this value and skips its update. `Some(0)`
    /// gives the spatially independent model.
    pub beta_fixed: Option<F>,
    /// Potts sweeps used to simulate the auxiliary field.
    pub aux_sweeps: usize,
    pub burn_in_gate: BurnInGate,
    pub sweep_order: SweepOrder,
    pub seed: u64,
}

impl<F: Real> McmcConfig<F> {
    /// Settings used for the simulation studies (`B = 10`).
    pub fn simulation(k: usize) -> Self {
        Self {
            p: F::lit(0.5),
            k,
            iters: 1000,
            burn_in: 300,
            prior_a: F::lit(100.0),
            prior_g: F::lit(100.0),
            prior_s0: F::lit(0.01),
            prior_d0: F::lit(0.01),
            beta_max: F::lit(10.0),
            prop_var_alpha: F::lit(0.1),
            prop_var_beta: F::lit(0.04),
            beta_init: F::lit(2.0),
            beta_fixed: None,
            aux_sweeps: 5,
            burn_in_gate: BurnInGate::Hold,
            sweep_order: SweepOrder::Sequential,
            seed: 1,
        }
    }

    /// Settings for long observed panels (`B = 100`).
    pub fn real_data(k: usize) -> Self {
        Self {
            iters: 3000,
            burn_in: 500,
            beta_max: F::lit(100.0),
            prop_var_beta: F::one(),
            beta_init: F::lit(10.0),
            ..Self::simulation(k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Config {
            field: field.to_string(),
            message,
        };
        check_level(self.p).map_err(|e| bad("p", e.to_string()))?;
        if self.k < 1 {
            return Err(bad("k", "need at least one cluster".into()));
        }
        if self.burn_in >= self.iters {
            return Err(bad(
                "burn_in",
                format!("burn-in {} must be below iters {}", self.burn_in, self.iters),
            ));
        }
        for (name, v) in [
            ("prior_a", self.prior_a),
            ("prior_g", self.prior_g),
            ("prior_s0", self.prior_s0),
            ("prior_d0", self.prior_d0),
            ("beta_max", self.beta_max),
            ("prop_var_alpha", self.prop_var_alpha),
            ("prop_var_beta", self.prop_var_beta),
        ] {
            if !(v > F::zero()) || !v.is_finite() {
                return Err(bad(name, format!("must be positive and finite, got {v}")));
            }
        }
        let beta0 = self.beta_fixed.unwrap_or(self.beta_init);
        if !(beta0 >= F::zero() && beta0 <= self.beta_max) {
            return Err(bad(
                "beta_init",
                format!("initial beta {beta0} outside [0, {}]", self.beta_max),
            ));
        }
        Ok(())
    }

    /// Same settings at another precision.
    pub fn cast<G: Real>(&self) -> McmcConfig<G> {
        let c = |v: F| G::lit(v.as_f64());
        McmcConfig {
            p: c(self.p),
            k: self.k,
            iters: self.iters,
            burn_in: self.burn_in,
            prior_a: c(self.prior_a),
            prior_g: c(self.prior_g),
            prior_s0: c(self.prior_s0),
            prior_d0: c(self.prior_d0),
            beta_max: c(self.beta_max),
            prop_var_alpha: c(self.prop_var_alpha),
            prop_var_beta: c(self.prop_var_beta),
            beta_init: c(self.beta_init),
            beta_fixed: self.beta_fixed.map(c),
            aux_sweeps: self.aux_sweeps,
            burn_in_gate: self.burn_in_gate,
            sweep_order: self.sweep_order,
            seed: self.seed,
        }
    }

    /// Initial `beta` value: the fixed value when set, else `beta_init`.
    pub fn initial_beta(&self) -> F {
        self.beta_fixed.unwrap_or(self.beta_init)
    }
}

/// One state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<F> {
    /// Memberships in `0..K`.
    pub c: Vec<usize>,
    /// `K` coefficient vectors of length `P`.
    pub gamma: Vec<Vec<F>>,
    pub sigma2: Vec<F>,
    /// Latent weights, `N x T` row-major.
    pub w: Vec<F>,
    pub potts: PottsParams<F>,
}

impl<F: Real> ChainState<F> {
    pub fn k(&self) -> usize {
        self.sigma2.len()
    }

    /// Checks shapes and the parameter-space constraints.
    pub fn check(&self, n_sites: usize, n_times: usize, n_coef: usize, beta_max: F) -> Result<()> {
        let k = self.k();
        if self.c.len() != n_sites || self.w.len() != n_sites * n_times {
            return Err(Error::Shape("state does not match the panel".into()));
        }
        if self.gamma.len() != k || self.gamma.iter().any(|g| g.len() != n_coef) {
            return Err(Error::Shape("gamma does not match K x P".into()));
        }
        if self.potts.k() != k {
            return Err(Error::Shape("field parameters do not match K".into()));
        }
        if self.c.iter().any(|&l| l >= k) {
            return Err(Error::invalid("membership out of range"));
        }
        if self.sigma2.iter().any(|s| !(*s > F::zero()) || !s.is_finite()) {
            return Err(Error::invalid("sigma2 must be positive"));
        }
        if self.w.iter().any(|w| !(*w > F::zero()) || !w.is_finite()) {
            return Err(Error::invalid("latent weights must be positive"));
        }
        if self.potts.alpha[0] != F::zero() {
            return Err(Error::invalid("alpha[0] must be 0"));
        }
        if self
            .potts
            .beta
            .iter()
            .any(|b| !(*b >= F::zero() && *b <= beta_max))
        {
            return Err(Error::invalid("beta outside [0, B]"));
        }
        if self.gamma.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub(crate) fn check_against(
        &self,
        panel: &TimeSeriesPanel<F>,
        design: &DesignMatrix<F>,
        cfg: &McmcConfig<F>,
    ) -> Result<()> {
        if design.n_times() != panel.n_times() {
            return Err(Error::Shape(format!(
                "design has {} rows, panel has {} times",
                design.n_times(),
                panel.n_times()
            )));
        }
        if self.k() != cfg.k {
            return Err(Error::Shape(format!("state has {} clusters, config {}", self.k(), cfg.k)));
        }
        self.check(panel.n_sites(), panel.n_times(), design.n_columns(), cfg.beta_max)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.k()];
        for &l in &self.c {
            n[l] += 1;
        }
        n
    }
}


/// Output of [`fit_model`].
#[derive(Debug, Clone)]
pub struct ModelFit<F> {
    pub init: ChainState<F>,
    pub draws: PosteriorDraws<F>,
    pub summary: PosteriorSummary<F>,
    pub waic: F,
}

/// Starting state from [`crate::quantfit::init_state`], then one chain.
/// The start uses a separate random stream of `cfg.seed`.
pub fn fit_model<F: Real>(
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    net: &crate::graph::SpatialNetwork,
    cfg: &McmcConfig<F>,
) -> Result<ModelFit<F>> {
    use rand::SeedableRng;
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let init = crate::quantfit::init_state(panel, design, cfg, &mut rng)?;
    let draws = run_chain(panel, design, net, cfg, init.clone())?;
    let summary = posterior_summary(&draws)?;
    let waic = waic(&draws)?;
    Ok(ModelFit {
        init,
        draws,
        summary,
        waic,
    })
}

/// Fits one chain per cluster count in `ks` (in parallel, same seed) and
/// returns `(k, fit)` pairs in the order of `ks`.
pub fn select_k<F: Real>(
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    net: &crate::graph::SpatialNetwork,
    cfg: &McmcConfig<F>,
    ks: &[usize],
) -> Result<Vec<(usize, ModelFit<F>)>> {
    use rayon::prelude::*;
    ks.par_iter()
        .map(|&k| {
            let cfg = McmcConfig { k, ..cfg.clone() };
            fit_model(panel, design, net, &cfg).map(|fit| (k, fit))
        })
        .collect()
}

/// Cluster count with the smallest WAIC; ties go to the smaller count.
pub fn waic_argmin<F: Real>(fits: &[(usize, ModelFit<F>)]) -> Option<usize> {
    fits.iter()
        .filter(|(_, f)| f.waic.is_finite())
        .min_by(|a, b| {
            a.1.waic
                .partial_cmp(&b.1.waic)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        })
        .map(|(k, _)| *k)
}
