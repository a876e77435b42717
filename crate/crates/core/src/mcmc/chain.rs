use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::abc::{calibrate_tolerance, update_alpha_beta};
use super::summary::relabel_draws;
use super::updates::{fitted_curves, update_gamma, update_memberships, update_sigma2, update_w};
use super::{BurnInGate, ChainState, McmcConfig};
use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::graph::SpatialNetwork;
use crate::panel::TimeSeriesPanel;
use crate::samplers::check_loss;
use crate::scalar::Real;

/// Retained draws of a chain plus the diagnostics of its likelihood-free
/// step.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws<F> {
    /// 1-based iteration number of each retained draw.
    pub iterations: Vec<usize>,
    pub memberships: Vec<Vec<usize>>,
    pub gamma: Vec<Vec<Vec<F>>>,
    pub sigma2: Vec<Vec<F>>,
    pub alpha: Vec<Vec<F>>,
    pub beta: Vec<Vec<F>>,
    /// `log f(y_i | theta, c_i)` per retained draw and series.
    pub loglik: Vec<Vec<F>>,
    /// Partition the draws were relabelled against.
    pub reference: Vec<usize>,
    pub burn_in_distances: Vec<F>,
    /// Tolerance used after burn-in.
    pub tolerance: F,
    pub abc_accepted_burn_in: usize,
    pub abc_within_tolerance: usize,
    pub abc_accepted: usize,
    /// Final state of the chain (not relabelled).
    pub last_state: ChainState<F>,
}

impl<F: Real> PosteriorDraws<F> {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Acceptance rate of the likelihood-free step after burn-in.
    pub fn abc_acceptance_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.abc_accepted as f64 / self.len() as f64
        }
    }

    /// Writes `gamma.csv`, `sigma2.csv`, `alpha_beta.csv`,
    /// `memberships.csv` and `loglik.csv` into `dir`. Labels are 1-based.
    pub fn write_traces(&self, dir: &Path) -> Result<()> {
        let k = self.sigma2.first().map_or(0, Vec::len);
        let p = self.gamma.first().and_then(|g| g.first()).map_or(0, Vec::len);
        let n = self.reference.len();

        let mut gamma = String::from("iteration");
        for kk in 1..=k {
            for j in 1..=p {
                write!(gamma, ",gamma_{kk}_{j}").unwrap();
            }
        }
        let mut sigma2 = String::from("iteration");
        let mut ab = String::from("iteration");
        for kk in 1..=k {
            write!(sigma2, ",sigma2_{kk}").unwrap();
            write!(ab, ",alpha_{kk}").unwrap();
        }
        for kk in 1..=k {
            write!(ab, ",beta_{kk}").unwrap();
        }
        let mut memb = String::from("iteration");
        let mut ll = String::from("iteration");
        for i in 1..=n {
            write!(memb, ",site_{i}").unwrap();
            write!(ll, ",series_{i}").unwrap();
        }
        for s in [&mut gamma, &mut sigma2, &mut ab, &mut memb, &mut ll] {
            s.push('\n');
        }
        for (d, &it) in self.iterations.iter().enumerate() {
            for s in [&mut gamma, &mut sigma2, &mut ab, &mut memb, &mut ll] {
                write!(s, "{it}").unwrap();
            }
            for v in self.gamma[d].iter().flatten() {
                write!(gamma, ",{v:.16e}").unwrap();
            }
            for v in &self.sigma2[d] {
                write!(sigma2, ",{v:.16e}").unwrap();
            }
            for v in self.alpha[d].iter().chain(&self.beta[d]) {
                write!(ab, ",{v:.16e}").unwrap();
            }
            for l in &self.memberships[d] {
                write!(memb, ",{}", l + 1).unwrap();
            }
            for v in &self.loglik[d] {
                write!(ll, ",{v:.16e}").unwrap();
            }
            for s in [&mut gamma, &mut sigma2, &mut ab, &mut memb, &mut ll] {
                s.push('\n');
            }
        }
        for (name, body) in [
            ("gamma.csv", gamma),
            ("sigma2.csv", sigma2),
            ("alpha_beta.csv", ab),
            ("memberships.csv", memb),
            ("loglik.csv", ll),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// `log f(y_i | gamma_{c_i}, sigma_{c_i})` under the asymmetric Laplace
/// likelihood, for every series.
pub fn series_loglik<F: Real>(
    state: &ChainState<F>,
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    p: F,
) -> Vec<F> {
    let fitted = fitted_curves(state, design);
    let t_len = F::from_count(panel.n_times());
    let log_const: Vec<F> = state
        .sigma2
        .iter()
        .map(|s| t_len * (p * (F::one() - p) / s.sqrt()).ln())
        .collect();
    (0..panel.n_sites())
        .into_par_iter()
        .map(|i| {
            let k = state.c[i];
            let sigma = state.sigma2[k].sqrt();
            let loss: F = panel
                .series(i)
                .iter()
                .zip(&fitted[k])
                .map(|(&y, &f)| check_loss((y - f) / sigma, p))
                .sum();
            log_const[k] - loss
        })
        .collect()
}

/// Runs `cfg.iters` iterations from `init`.
///
/// During burn-in the likelihood-free step records the distance of every
/// proposal; with [`BurnInGate::Hold`] the field parameters stay at their
/// initial values, with [`BurnInGate::Open`] every proposal passes the
/// distance gate. At the end of burn-in the tolerance is set to the 5th
/// percentile of the recorded distances. Retained draws are relabelled against the
/// initial partition.
pub fn run_chain<F: Real>(
    panel: &TimeSeriesPanel<F>,
    design: &DesignMatrix<F>,
    net: &SpatialNetwork,
    cfg: &McmcConfig<F>,
    init: ChainState<F>,
) -> Result<PosteriorDraws<F>> {
    cfg.validate()?;
    if net.n_sites() != panel.n_sites() {
        return Err(Error::Shape(format!(
            "network has {} sites, panel {}",
            net.n_sites(),
            panel.n_sites()
        )));
    }
    init.check_against(panel, design, cfg)?;
    let reference = init.c.clone();
    let mut state = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let retained = cfg.iters - cfg.burn_in;
    let mut draws = PosteriorDraws {
        iterations: Vec::with_capacity(retained),
        memberships: Vec::with_capacity(retained),
        gamma: Vec::with_capacity(retained),
        sigma2: Vec::with_capacity(retained),
        alpha: Vec::with_capacity(retained),
        beta: Vec::with_capacity(retained),
        loglik: Vec::with_capacity(retained),
        reference,
        burn_in_distances: Vec::with_capacity(cfg.burn_in),
        tolerance: F::infinity(),
        abc_accepted_burn_in: 0,
        abc_within_tolerance: 0,
        abc_accepted: 0,
        last_state: state.clone(),
    };
    let check = |s: &ChainState<F>| {
        debug_assert!(
            s.check_against(panel, design, cfg).is_ok(),
            "{:?}",
            s.check_against(panel, design, cfg)
        );
    };

    for m in 1..=cfg.iters {
        update_gamma(&mut state, panel, design, cfg, &mut rng)?;
        check(&state);
        update_sigma2(&mut state, panel, design, cfg, &mut rng)?;
        check(&state);
        update_w(&mut state, panel, design, cfg, &mut rng);
        check(&state);
        update_memberships(&mut state, panel, design, net, cfg, &mut rng);
        check(&state);

        let burning = m <= cfg.burn_in;
        let tol = match (burning, cfg.burn_in_gate) {
            (true, BurnInGate::Hold) => F::neg_infinity(),
            (true, BurnInGate::Open) => F::infinity(),
            (false, _) => draws.tolerance,
        };
        let step = update_alpha_beta(&mut state, net, cfg, tol, &mut rng)?;
        check(&state);
        if burning {
            draws.burn_in_distances.push(step.distance);
            draws.abc_accepted_burn_in += usize::from(step.accepted);
            if m == cfg.burn_in {
                draws.tolerance = calibrate_tolerance(&draws.burn_in_distances)?;
            }
            continue;
        }
        draws.abc_within_tolerance += usize::from(step.within_tolerance);
        draws.abc_accepted += usize::from(step.accepted);
        draws.iterations.push(m);
        draws.memberships.push(state.c.clone());
        draws.gamma.push(state.gamma.clone());
        draws.sigma2.push(state.sigma2.clone());
        draws.alpha.push(state.potts.alpha.clone());
        draws.beta.push(state.potts.beta.clone());
        draws.loglik.push(series_loglik(&state, panel, design, cfg.p));
    }
    draws.last_state = state;
    let reference = draws.reference.clone();
    relabel_draws(&mut draws, &reference);
    Ok(draws)
}
