//! Full conditionals of the sampler against brute-force oracles.

use proptest::prelude::*;
use quantclust::basis::{ColumnRole, DesignMatrix};
use quantclust::graph::{PottsParams, SiteCoords, SpatialNetwork};
use quantclust::linalg::Matrix;
use quantclust::mcmc::{gamma_conditional, membership_log_weights, sigma2_conditional, ChainState, McmcConfig};
use quantclust::panel::TimeSeriesPanel;
use quantclust::samplers::tau_omega;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    panel: TimeSeriesPanel<f64>,
    design: DesignMatrix<f64>,
    state: ChainState<f64>,
    cfg: McmcConfig<f64>,
}

fn line(n: usize) -> SpatialNetwork {
    let neighbors = (0..n)
        .map(|i| {
            let mut v = Vec::new();
            if i > 0 {
                v.push(i - 1);
            }
            if i + 1 < n {
                v.push(i + 1);
            }
            v
        })
        .collect();
    let coords = SiteCoords::Grid((0..n as i64).map(|c| (0, c)).collect());
    SpatialNetwork::from_neighbors(neighbors, coords, 2).unwrap()
}

fn design_from(rows: Vec<Vec<f64>>) -> DesignMatrix<f64> {
    let p = rows[0].len();
    let roles = (0..p).map(|j| ColumnRole::Raw(format!("x{j}"))).collect();
    DesignMatrix::new(Matrix::from_rows(&rows).unwrap(), roles).unwrap()
}

fn random_instance(seed: u64, n: usize, t_len: usize, p: usize, k: usize, level: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let rows: Vec<Vec<f64>> = (0..t_len).map(|_| (0..p).map(|_| u(-1.0, 1.0)).collect()).collect();
    let y: Vec<f64> = (0..n * t_len).map(|_| u(-2.0, 2.0)).collect();
    let w: Vec<f64> = (0..n * t_len).map(|_| u(0.1, 3.0)).collect();
    let gamma: Vec<Vec<f64>> = (0..k).map(|_| (0..p).map(|_| u(-1.0, 1.0)).collect()).collect();
    let sigma2: Vec<f64> = (0..k).map(|_| u(0.2, 2.0)).collect();
    let mut alpha: Vec<f64> = (0..k).map(|_| u(-1.0, 1.0)).collect();
    alpha[0] = 0.0;
    let beta: Vec<f64> = (0..k).map(|_| u(0.0, 2.0)).collect();
    let c: Vec<usize> = (0..n).map(|i| i % k).collect();
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let coords = SiteCoords::Grid((0..n as i64).map(|c| (0, c)).collect());
    let panel = TimeSeriesPanel::new(y, t_len, ids, coords).unwrap();
    let cfg = McmcConfig {
        p: level,
        k,
        ..McmcConfig::simulation(k)
    };
    Instance {
        panel,
        design: design_from(rows),
        state: ChainState {
            c,
            gamma,
            sigma2,
            w,
            potts: PottsParams::new(alpha, beta).unwrap(),
        },
        cfg,
    }
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `(I/g + sum Psi' W Psi)^{-1} sum Psi' W u`, one observation at a time.
fn gamma_oracle(inst: &Instance, k: usize) -> Vec<f64> {
    let (tau, omega2) = tau_omega(inst.cfg.p);
    let p = inst.design.n_columns();
    let t_len = inst.panel.n_times();
    let sigma2 = inst.state.sigma2[k];
    let mut a = vec![vec![0.0; p]; p];
    for (r, row) in a.iter_mut().enumerate() {
        row[r] = 1.0 / inst.cfg.prior_g;
    }
    let mut b = vec![0.0; p];
    for i in 0..inst.panel.n_sites() {
        if inst.state.c[i] != k {
            continue;
        }
        for t in 0..t_len {
            let w = inst.state.w[i * t_len + t];
            let weight = 1.0 / (sigma2 * omega2 * w);
            let u = inst.panel.series(i)[t] - tau * sigma2.sqrt() * w;
            let psi = inst.design.row(t);
            for r in 0..p {
                b[r] += psi[r] * weight * u;
                for c in 0..p {
                    a[r][c] += psi[r] * weight * psi[c];
                }
            }
        }
    }
    dense_solve(a, b)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_mean_matches_dense_solve(
        seed in any::<u64>(),
        n in 1usize..=5,
        t_len in 2usize..=10,
        p in 1usize..=4,
        k in 1usize..=3,
        level in 0.05f64..0.95,
    ) {
        let inst = random_instance(seed, n, t_len, p, k, level);
        for kk in 0..k {
            let (m, _) = gamma_conditional(&inst.state, &inst.panel, &inst.design, &inst.cfg, kk).unwrap();
            let oracle = gamma_oracle(&inst, kk);
            prop_assert!(rel_err(&m, &oracle) < 1e-8, "{:?} vs {:?}", m, oracle);
        }
    }

    #[test]
    fn sigma2_parameters_match_double_loop(
        seed in any::<u64>(),
        n in 1usize..=5,
        t_len in 2usize..=10,
        p in 1usize..=4,
        k in 1usize..=3,
        level in 0.05f64..0.95,
    ) {
        let inst = random_instance(seed, n, t_len, p, k, level);
        let (tau, omega2) = tau_omega(level);
        for kk in 0..k {
            let (s1, d1) = sigma2_conditional(&inst.state, &inst.panel, &inst.design, &inst.cfg, kk);
            let sigma = inst.state.sigma2[kk].sqrt();
            let mut members = 0usize;
            let mut sum = 0.0;
            for i in 0..n {
                if inst.state.c[i] != kk {
                    continue;
                }
                members += 1;
                for t in 0..t_len {
                    let w = inst.state.w[i * t_len + t];
                    let fit: f64 = inst.design.row(t).iter().zip(&inst.state.gamma[kk]).map(|(a, b)| a * b).sum();
                    let d = inst.panel.series(i)[t] - tau * sigma * w - fit;
                    sum += d * d / w;
                }
            }
            let s1_oracle = inst.cfg.prior_s0 + (members * t_len) as f64 / 2.0;
            let d1_oracle = inst.cfg.prior_d0 + sum / (2.0 * omega2);
            prop_assert!((s1 - s1_oracle).abs() <= 1e-10 * s1_oracle);
            prop_assert!((d1 - d1_oracle).abs() <= 1e-10 * d1_oracle, "{} vs {}", d1, d1_oracle);
        }
    }

    #[test]
    fn zero_beta_weights_ignore_the_neighbors(
        seed in any::<u64>(),
        t_len in 2usize..=6,
        k in 2usize..=3,
        relabel in proptest::collection::vec(0usize..3, 5),
    ) {
        let mut inst = random_instance(seed, 5, t_len, 2, k, 0.5);
        inst.state.potts.beta = vec![0.0; k];
        let net = line(5);
        let (tau, omega2) = tau_omega(0.5f64);
        for i in 0..5 {
            let base = membership_log_weights(i, &inst.state, &inst.panel, &inst.design, &net, &inst.cfg);
            let mut other = inst.state.clone();
            for (j, &l) in relabel.iter().enumerate() {
                if j != i {
                    other.c[j] = l % k;
                }
            }
            let moved = membership_log_weights(i, &other, &inst.panel, &inst.design, &net, &inst.cfg);
            prop_assert_eq!(&base, &moved);
            // the independent model: likelihood plus alpha only
            for kk in 0..k {
                let s2 = inst.state.sigma2[kk];
                let mut q = 0.0;
                for t in 0..t_len {
                    let w = inst.state.w[i * t_len + t];
                    let fit: f64 = inst.design.row(t).iter().zip(&inst.state.gamma[kk]).map(|(a, b)| a * b).sum();
                    let d = inst.panel.series(i)[t] - tau * s2.sqrt() * w - fit;
                    q += d * d / w;
                }
                let expect = -q / (2.0 * s2 * omega2) - t_len as f64 / 2.0 * s2.ln() + inst.state.potts.alpha[kk];
                prop_assert!((base[kk] - expect).abs() < 1e-10 * expect.abs().max(1.0));
            }
        }
    }
}

#[test]
fn ols_limit_at_the_median() {
    let mut inst = random_instance(9, 1, 8, 3, 1, 0.5);
    inst.cfg.prior_g = 1e9;
    inst.state.w = vec![0.7; 8];
    let (m, _) = gamma_conditional(&inst.state, &inst.panel, &inst.design, &inst.cfg, 0).unwrap();
    let mut xtx = vec![vec![0.0; 3]; 3];
    let mut xty = vec![0.0; 3];
    for t in 0..8 {
        let x = inst.design.row(t);
        for r in 0..3 {
            xty[r] += x[r] * inst.panel.series(0)[t];
            for c in 0..3 {
                xtx[r][c] += x[r] * x[c];
            }
        }
    }
    let ols = dense_solve(xtx, xty);
    assert!(rel_err(&m, &ols) < 1e-6, "{m:?} vs {ols:?}");
}

#[test]
fn empty_cluster_returns_the_prior() {
    let mut inst = random_instance(4, 3, 5, 2, 2, 0.3);
    inst.state.c = vec![0; 3];
    let (m, prec) = gamma_conditional(&inst.state, &inst.panel, &inst.design, &inst.cfg, 1).unwrap();
    assert_eq!(m, vec![0.0, 0.0]);
    let g = inst.cfg.prior_g;
    assert_eq!(prec.as_slice(), &[1.0 / g, 0.0, 0.0, 1.0 / g]);
    let (s1, d1) = sigma2_conditional(&inst.state, &inst.panel, &inst.design, &inst.cfg, 1);
    assert_eq!((s1, d1), (inst.cfg.prior_s0, inst.cfg.prior_d0));
}

#[test]
fn shape_for_one_long_series() {
    let inst = random_instance(5, 1, 100, 2, 1, 0.5);
    let (s1, _) = sigma2_conditional(&inst.state, &inst.panel, &inst.design, &inst.cfg, 0);
    assert!((s1 - 50.01).abs() < 1e-12, "{s1}");
}

/// 4-site line, two clusters, three times: conditional probabilities of
/// every site by hand.
#[test]
fn four_site_line_by_hand() {
    let net = line(4);
    let design = design_from(vec![vec![1.0, 0.0], vec![1.0, 0.5], vec![1.0, 1.0]]);
    let y: Vec<f64> = vec![0.9, 1.4, 2.1, 2.0, 2.6, 3.1, 1.1, 1.5, 1.8, 2.2, 2.4, 3.0];
    let w: Vec<f64> = vec![0.5, 1.2, 0.8, 2.0, 0.3, 1.0, 1.5, 0.7, 0.9, 0.4, 1.1, 0.6];
    let panel = TimeSeriesPanel::new(y.clone(), 3, (0..4).map(|i| i.to_string()).collect(), SiteCoords::Grid((0..4).map(|c| (0, c)).collect())).unwrap();
    let state = ChainState {
        c: vec![0, 1, 0, 1],
        gamma: vec![vec![1.0, 1.0], vec![2.0, 1.0]],
        sigma2: vec![0.25f64, 0.5],
        w: w.clone(),
        potts: PottsParams::new(vec![0.0, -0.4], vec![0.7, 1.3]).unwrap(),
    };
    let cfg = McmcConfig {
        p: 0.25,
        ..McmcConfig::simulation(2)
    };
    // tau = 0.5/0.1875, omega^2 = 2/0.1875
    let tau = 0.5 / 0.1875;
    let omega2 = 2.0 / 0.1875;
    let t_grid = [0.0, 0.5, 1.0];
    let neighbors: [&[usize]; 4] = [&[1], &[0, 2], &[1, 3], &[2]];
    for i in 0..4 {
        let mut logw = [0.0f64; 2];
        for (k, lw) in logw.iter_mut().enumerate() {
            let s2 = state.sigma2[k];
            let g = &state.gamma[k];
            let mut q = 0.0;
            for t in 0..3 {
                let d = y[i * 3 + t] - tau * s2.sqrt() * w[i * 3 + t] - (g[0] + g[1] * t_grid[t]);
                q += d * d / w[i * 3 + t];
            }
            let n_match = neighbors[i].iter().filter(|&&j| state.c[j] == k).count() as f64;
            *lw = -q / (2.0 * s2 * omega2) - 1.5 * s2.ln() + state.potts.alpha[k] + state.potts.beta[k] * n_match;
        }
        let p1 = 1.0 / (1.0 + (logw[0] - logw[1]).exp());
        let got = membership_log_weights(i, &state, &panel, &design, &net, &cfg);
        let got_p1 = 1.0 / (1.0 + (got[0] - got[1]).exp());
        assert!((got_p1 - p1).abs() < 1e-12, "site {i}: {got_p1} vs {p1}");
    }
}

#[test]
fn symmetric_clusters_are_equally_likely() {
    let mut inst = random_instance(12, 4, 5, 2, 3, 0.4);
    inst.state.gamma = vec![vec![0.3, -0.2]; 3];
    inst.state.sigma2 = vec![0.8; 3];
    inst.state.potts = PottsParams::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
    let net = line(4);
    for i in 0..4 {
        let w = membership_log_weights(i, &inst.state, &inst.panel, &inst.design, &net, &inst.cfg);
        assert!(w.iter().all(|&v| v == w[0]), "{w:?}");
    }
}
