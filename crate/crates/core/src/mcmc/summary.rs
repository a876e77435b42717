use super::chain::PosteriorDraws;
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};

/// Point summaries of a chain: modal memberships and posterior means.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary<F> {
    pub memberships: Vec<usize>,
    pub gamma_mean: Vec<Vec<F>>,
    pub sigma2_mean: Vec<F>,
    pub alpha_mean: Vec<F>,
    pub beta_mean: Vec<F>,
}

/// Greedy matching on the confusion matrix: repeatedly pairs the
/// (label, reference label) cell with the largest count. Returns
/// `perm[label] = reference label`.
pub fn matching_permutation(labels: &[usize], reference: &[usize], k: usize) -> Vec<usize> {
    let mut confusion = vec![vec![0usize; k]; k];
    for (&a, &b) in labels.iter().zip(reference) {
        if a < k && b < k {
            confusion[a][b] += 1;
        }
    }
    let mut perm = vec![usize::MAX; k];
    let mut used = vec![false; k];
    for _ in 0..k {
        let mut best = None;
        for a in (0..k).filter(|&a| perm[a] == usize::MAX) {
            for b in (0..k).filter(|&b| !used[b]) {
                // ties go to the smallest (a, b)
                if best.is_none_or(|(_, _, n)| confusion[a][b] > n) {
                    best = Some((a, b, confusion[a][b]));
                }
            }
        }
        let (a, b, _) = best.expect("free pair while labels remain");
        perm[a] = b;
        used[b] = true;
    }
    perm
}

/// Relabels every draw so its partition agrees best with `reference`.
/// `alpha` is shifted afterwards so that `alpha[0] = 0` again.
pub(crate) fn relabel_draws<F: Real>(draws: &mut PosteriorDraws<F>, reference: &[usize]) {
    for d in 0..draws.len() {
        let k = draws.sigma2[d].len();
        let perm = matching_permutation(&draws.memberships[d], reference, k);
        if perm.iter().enumerate().all(|(a, &b)| a == b) {
            continue;
        }
        for l in &mut draws.memberships[d] {
            *l = perm[*l];
        }
        let permute = |v: &mut Vec<F>| {
            let mut out = v.clone();
            for (a, &b) in perm.iter().enumerate() {
                out[b] = v[a];
            }
            *v = out;
        };
        permute(&mut draws.sigma2[d]);
        permute(&mut draws.alpha[d]);
        permute(&mut draws.beta[d]);
        let mut g = draws.gamma[d].clone();
        for (a, &b) in perm.iter().enumerate() {
            g[b] = draws.gamma[d][a].clone();
        }
        draws.gamma[d] = g;
        let shift = draws.alpha[d][0];
        for a in &mut draws.alpha[d] {
            *a = *a - shift;
        }
    }
}

/// Per-site modal label (ties to the smaller label) and elementwise
/// posterior means.
pub fn posterior_summary<F: Real>(draws: &PosteriorDraws<F>) -> Result<PosteriorSummary<F>> {
    if draws.is_empty() {
        return Err(Error::invalid("no retained draws"));
    }
    let n_draws = F::from_count(draws.len());
    let k = draws.sigma2[0].len();
    let n = draws.memberships[0].len();
    let memberships = (0..n)
        .map(|i| {
            let mut votes = vec![0usize; k];
            for m in &draws.memberships {
                votes[m[i]] += 1;
            }
            // max_by_key keeps the last maximum; scan in reverse for the first
            (0..k).rev().max_by_key(|&l| votes[l]).unwrap()
        })
        .collect();
    let mean_of = |rows: &[Vec<F>]| -> Vec<F> {
        let mut acc = vec![F::zero(); rows[0].len()];
        for r in rows {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a = *a + v;
            }
        }
        acc.into_iter().map(|a| a / n_draws).collect()
    };
    let gamma_mean = (0..k)
        .map(|kk| {
            let rows: Vec<Vec<F>> = draws.gamma.iter().map(|g| g[kk].clone()).collect();
            mean_of(&rows)
        })
        .collect();
    Ok(PosteriorSummary {
        memberships,
        gamma_mean,
        sigma2_mean: mean_of(&draws.sigma2),
        alpha_mean: mean_of(&draws.alpha),
        beta_mean: mean_of(&draws.beta),
    })
}

/// `-2 (sum_i log mean_m f(y_i | theta_m, c_i^m) - sum_i var_m log f(..))`
/// with the mean taken in log space and the variance with denominator
/// `M - 1`.
pub fn waic<F: Real>(draws: &PosteriorDraws<F>) -> Result<F> {
    let m = draws.loglik.len();
    if m < 2 {
        return Err(Error::invalid(format!("WAIC needs at least 2 draws, got {m}")));
    }
    let n = draws.loglik[0].len();
    let log_m = F::from_count(m).ln();
    let mut lppd = F::zero();
    let mut penalty = F::zero();
    let mut col = vec![F::zero(); m];
    for i in 0..n {
        for (c, row) in col.iter_mut().zip(&draws.loglik) {
            *c = row[i];
        }
        lppd = lppd + log_sum_exp(&col) - log_m;
        penalty = penalty + crate::stats::variance(&col);
    }
    Ok(F::lit(-2.0) * (lppd - penalty))
}
