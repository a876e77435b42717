//! Synthetic designs and clustering evaluation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{simulation_regressors, DesignMatrix};
use crate::config::{BasisSpec, DesignChoice};
use crate::error::{Error, Result};
use crate::graph::{NetworkKind, SiteCoords};
use crate::mcmc::{fit_model, matching_permutation, McmcConfig};
use crate::panel::{Calendar, TimeSeriesPanel};
use crate::samplers::{ald_sample, AldParams};
use crate::scalar::Real;
use crate::stats;

/// True coefficients of the three simulated clusters, on
/// `(t/100, cos 3 pi t/100, sin 3 pi t/100)`.
pub const TRUE_THETA: [[f64; 3]; 3] = [[1.0, 0.5, 0.25], [1.25, 0.25, 0.5], [1.5, -0.25, 0.5]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// Outer ring, middle ring, inner disc.
    Circles,
    /// Three vertical bands.
    Rectangles,
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circles" => Ok(PatternKind::Circles),
            "rectangles" => Ok(PatternKind::Rectangles),
            _ => Err(Error::invalid(format!("unknown pattern `{s}`"))),
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Circles => "circles",
            PatternKind::Rectangles => "rectangles",
        })
    }
}

/// True memberships on a `rows x cols` grid, sites row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPattern {
    pub labels: Vec<usize>,
    pub kind: PatternKind,
    pub rows: usize,
    pub cols: usize,
}

impl LabeledPattern {
    pub fn n_sites(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut s = [0; 3];
        self.labels.iter().for_each(|&l| s[l] += 1);
        s
    }

    /// Cells as `(row, col)`.
    pub fn coords(&self) -> SiteCoords {
        SiteCoords::Grid(
            (0..self.rows as i64)
                .flat_map(|r| (0..self.cols as i64).map(move |c| (r, c)))
                .collect(),
        )
    }
}

/// Circles rank sites by distance to the grid center (ties by index): the
/// closest 216/900 of the sites form cluster 3, the next 244/900 cluster 2
/// and the rest cluster 1, giving sizes (440, 244, 216) on 30 x 30.
/// Rectangles split the columns into three equal bands.
pub fn make_pattern(kind: PatternKind, rows: usize, cols: usize) -> Result<LabeledPattern> {
    let n = rows * cols;
    if rows < 3 || cols < 3 {
        return Err(Error::invalid(format!("grid {rows}x{cols} too small for three clusters")));
    }
    let labels = match kind {
        PatternKind::Circles => {
            let (cr, cc) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
            let d2 = |i: usize| {
                let (r, c) = ((i / cols) as f64 - cr, (i % cols) as f64 - cc);
                r * r + c * c
            };
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| d2(a).partial_cmp(&d2(b)).unwrap().then(a.cmp(&b)));
            let inner = (n * 216 + 450) / 900;
            let middle = (n * 244 + 450) / 900;
            let mut labels = vec![0; n];
            for (rank, &i) in order.iter().enumerate() {
                labels[i] = if rank < inner {
                    2
                } else if rank < inner + middle {
                    1
                } else {
                    0
                };
            }
            labels
        }
        PatternKind::Rectangles => {
            if cols % 3 != 0 {
                return Err(Error::invalid(format!("{cols} columns do not split into three equal bands")));
            }
            (0..n).map(|i| (i % cols) * 3 / cols).collect()
        }
    };
    Ok(LabeledPattern {
        labels,
        kind,
        rows,
        cols,
    })
}

/// Error law of a simulated panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// ALD(0.5, sigma) in every cluster.
    Ald { sigma: f64 },
    /// Standard normal in every cluster.
    Gaussian,
    /// Normal, normal/shifted-exponential mixture and shifted exponential.
    Skewed,
}

impl FromStr for Scenario {
    type Err = Error;

    /// `example1`, `A` or `B`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(Scenario::Ald { sigma: 0.5 }),
            "A" | "a" => Ok(Scenario::Gaussian),
            "B" | "b" => Ok(Scenario::Skewed),
            _ => Err(Error::invalid(format!("unknown scenario `{s}`"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Ald { .. } => f.write_str("example1"),
            Scenario::Gaussian => f.write_str("A"),
            Scenario::Skewed => f.write_str("B"),
        }
    }
}

/// One error draw for a site of cluster `k`.
pub fn scenario_error<F: Real, R: Rng + ?Sized>(scenario: Scenario, k: usize, rng: &mut R) -> Result<F> {
    Ok(match scenario {
        Scenario::Ald { sigma } if sigma == 0.0 => F::zero(),
        Scenario::Ald { sigma } => ald_sample(&AldParams::new(F::lit(0.5), F::lit(sigma))?, rng),
        Scenario::Gaussian => F::std_normal(rng),
        Scenario::Skewed => match k {
            0 => F::std_normal(rng),
            1 => {
                let n = F::std_normal(rng);
                let g = F::std_exp(rng);
                if rng.random::<bool>() {
                    n
                } else {
                    g - F::one()
                }
            }
            _ => F::std_exp(rng) - F::one(),
        },
    })
}

/// `y_it = theta_k' x(t) + e_it` on `t = 1..T` with the three true
/// coefficient vectors.
pub fn simulate_panel<F: Real>(
    pattern: &LabeledPattern,
    scenario: Scenario,
    n_times: usize,
    seed: u64,
) -> Result<TimeSeriesPanel<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<F>> = TRUE_THETA
        .iter()
        .map(|theta| {
            (1..=n_times)
                .map(|t| {
                    let x = simulation_regressors(F::from_count(t));
                    (0..3).map(|j| F::lit(theta[j]) * x[j]).sum()
                })
                .collect()
        })
        .collect();
    let mut y = Vec::with_capacity(pattern.n_sites() * n_times);
    for &k in &pattern.labels {
        for t in 0..n_times {
            y.push(means[k][t] + scenario_error(scenario, k, &mut rng)?);
        }
    }
    let ids = (1..=pattern.n_sites()).map(|i| i.to_string()).collect();
    TimeSeriesPanel::new(y, n_times, ids, pattern.coords())
}

/// ALD(0.5, sigma) errors.
pub fn simulate_panel_example1<F: Real>(
    pattern: &LabeledPattern,
    n_times: usize,
    sigma: f64,
    seed: u64,
) -> Result<TimeSeriesPanel<F>> {
    simulate_panel(pattern, Scenario::Ald { sigma }, n_times, seed)
}

/// Gaussian (`A`) or skewed (`B`) errors.
pub fn simulate_panel_example2<F: Real>(
    pattern: &LabeledPattern,
    scenario: Scenario,
    n_times: usize,
    seed: u64,
) -> Result<TimeSeriesPanel<F>> {
    if let Scenario::Ald { .. } = scenario {
        return Err(Error::invalid("second example uses scenario A or B"));
    }
    simulate_panel(pattern, scenario, n_times, seed)
}

/// Synthetic monthly temperature panel from the modulation model: `n_sites`
/// sites on a quarter-degree elliptical patch, six regions with their own
/// level, trend and seasonal amplitude and phase, ALD(0.5, 0.3) errors.
/// Returns the raw panel (starting January 1982) and the region labels.
pub fn simulate_modulation_panel<F: Real>(
    n_sites: usize,
    n_times: usize,
    seed: u64,
) -> Result<(TimeSeriesPanel<F>, Vec<usize>)> {
    let (a, b) = (14.0f64, 6.0f64);
    let mut cells: Vec<(i64, i64)> = (-10..=10i64)
        .flat_map(|r| (-20..=20i64).map(move |c| (r, c)))
        .collect();
    let e = |&(r, c): &(i64, i64)| (c as f64 / a).powi(2) + (r as f64 / b).powi(2);
    cells.sort_by(|x, y| e(x).partial_cmp(&e(y)).unwrap().then(x.cmp(y)));
    if n_sites > cells.len() {
        return Err(Error::invalid(format!("at most {} sites", cells.len())));
    }
    cells.truncate(n_sites);
    cells.sort();
    let labels: Vec<usize> = cells
        .iter()
        .map(|&(r, c)| {
            let band = if c < -5 { 0 } else if c < 5 { 1 } else { 2 };
            2 * band + usize::from(r > 0)
        })
        .collect();
    let coords: Vec<(f64, f64)> = cells
        .iter()
        .map(|&(r, c)| (15.0 + 0.25 * c as f64, 38.0 + 0.25 * r as f64))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = AldParams::new(F::lit(0.5), F::lit(0.3))?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = Vec::with_capacity(n_sites * n_times);
    for &k in &labels {
        let offset = 0.3 * F::std_normal(&mut rng).as_f64();
        let kf = k as f64;
        for t in 1..=n_times {
            let tf = t as f64;
            let u = tf / n_times as f64;
            let level = 18.5 + 0.4 * kf + offset + (0.6 + 0.1 * kf) * u + 0.2 * (two_pi * u).sin();
            let amp1 = (4.0 + 0.3 * (kf % 2.0)) * (1.0 + 0.05 * (two_pi * u).sin());
            let phase1 = two_pi * (7.2 + 0.25 * kf) / 12.0;
            let amp2 = 0.4 + 0.12 * kf;
            let phase2 = two_pi * (1.5 + 0.5 * kf) / 12.0;
            let arg = two_pi * tf / 12.0;
            let season = amp1 * (arg - phase1).cos() + amp2 * (2.0 * arg - phase2).cos();
            y.push(F::lit(level + season) + ald_sample(&noise, &mut rng));
        }
    }
    let ids = (1..=n_sites).map(|i| format!("S{i:03}")).collect();
    let mut panel = TimeSeriesPanel::new(y, n_times, ids, SiteCoords::Planar(coords))?;
    panel.calendar = Some(Calendar {
        start_year: 1982,
        start_month: 1,
    });
    Ok((panel, labels))
}

fn pairs(n: u64) -> i128 {
    i128::from(n) * (i128::from(n) - 1) / 2
}

/// Adjusted Rand index. Pair counts are exact integers; the single final
/// division is the only rounding. Two partitions that are both all-in-one
/// or both all-singletons score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("partitions of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty partitions"));
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: i128 = table.values().map(|&n| pairs(n)).sum();
    let sa: i128 = rows.values().map(|&n| pairs(n)).sum();
    let sb: i128 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len() as u64);
    let num = 2 * (index * total - sa * sb);
    let den = (sa + sb) * total - 2 * sa * sb;
    if den == 0 {
        return Ok(if num == 0 { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Potts prior with `beta` estimated.
    Spatial,
    /// `beta` fixed at 0: independent memberships.
    Independent,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Spatial => "ALC-S",
            Method::Independent => "ALC",
        }
    }
}

/// One cell of a simulation study.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub pattern: PatternKind,
    pub scenario: Scenario,
    pub network: NetworkKind,
    pub design: DesignChoice,
    pub method: Method,
    pub replications: usize,
    pub rows: usize,
    pub cols: usize,
    pub n_times: usize,
    pub mcmc: McmcConfig<f64>,
    pub seed: u64,
}

impl ExperimentSpec {
    /// 30 x 30 grid, `T = 100`, three clusters, simulation defaults.
    pub fn new(pattern: PatternKind, scenario: Scenario, method: Method, replications: usize, seed: u64) -> Self {
        Self {
            pattern,
            scenario,
            network: NetworkKind::Lattice(4),
            design: DesignChoice::Simulation,
            method,
            replications,
            rows: 30,
            cols: 30,
            n_times: 100,
            mcmc: McmcConfig::simulation(3),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Replication<F> {
    pub index: usize,
    pub data_seed: u64,
    pub chain_seed: u64,
    pub ari: f64,
    /// Posterior-mean coefficients with clusters matched to the truth.
    pub gamma: Vec<Vec<F>>,
    pub waic: F,
    pub abc_acceptance: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult<F> {
    pub spec: ExperimentSpec,
    pub replications: Vec<Replication<F>>,
}

/// Data and chain seeds of replication `index`.
pub fn replication_seeds(master: u64, index: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    (rng.next_u64(), rng.next_u64())
}

/// Simulates and fits every replication (in parallel) and scores each fit
/// against the truth. Results are ordered by replication index.
pub fn run_experiment<F: Real>(spec: &ExperimentSpec) -> Result<ExperimentResult<F>> {
    let pattern = make_pattern(spec.pattern, spec.rows, spec.cols)?;
    let net = spec.network.build(&pattern.coords())?;
    let design: DesignMatrix<F> = spec.design.build(spec.n_times, &BasisSpec::default())?;
    let replications = (0..spec.replications)
        .into_par_iter()
        .map(|index| {
            let (data_seed, chain_seed) = replication_seeds(spec.seed, index);
            let panel = simulate_panel::<F>(&pattern, spec.scenario, spec.n_times, data_seed)?;
            let mut cfg = McmcConfig {
                seed: chain_seed,
                ..spec.mcmc.clone()
            };
            if spec.method == Method::Independent {
                cfg.beta_fixed = Some(0.0);
            }
            let cfg = cfg.cast::<F>();
            let fit = fit_model(&panel, &design, &net, &cfg)?;
            let est = &fit.summary.memberships;
            let ari = adjusted_rand_index(est, &pattern.labels)?;
            let perm = matching_permutation(est, &pattern.labels, cfg.k);
            let mut gamma = fit.summary.gamma_mean.clone();
            for (l, g) in fit.summary.gamma_mean.iter().enumerate() {
                gamma[perm[l]] = g.clone();
            }
            Ok(Replication {
                index,
                data_seed,
                chain_seed,
                ari,
                gamma,
                waic: fit.waic,
                abc_acceptance: fit.draws.abc_acceptance_rate(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        spec: spec.clone(),
        replications,
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = stats::mean(xs);
    let sd = if xs.len() > 1 { stats::std_dev(xs) } else { 0.0 };
    (m, sd)
}

impl<F: Real> ExperimentResult<F> {
    pub fn aris(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.ari).collect()
    }

    /// Mean ARI and its standard deviation across replications.
    pub fn ari_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.aris())
    }

    /// `(cluster, coefficient, truth, mean, sd)` for each true coefficient.
    pub fn gamma_recovery(&self) -> Vec<(usize, usize, f64, f64, f64)> {
        let mut out = Vec::new();
        for (k, theta) in TRUE_THETA.iter().enumerate() {
            for (j, &truth) in theta.iter().enumerate() {
                let xs: Vec<f64> = self
                    .replications
                    .iter()
                    .filter_map(|r| r.gamma.get(k).and_then(|g| g.get(j)).map(|v| v.as_f64()))
                    .collect();
                if xs.is_empty() {
                    continue;
                }
                let (m, sd) = mean_sd(&xs);
                out.push((k, j, truth, m, sd));
            }
        }
        out
    }
}

/// `method,pattern,mean_ARI,sd_ARI` rows; the spread is the standard
/// deviation across replications.
pub fn table1_csv<F: Real>(results: &[ExperimentResult<F>]) -> String {
    let mut out = String::from("method,pattern,network,scenario,replications,mean_ARI,sd_ARI\n");
    for r in results {
        let (m, sd) = r.ari_mean_sd();
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6}",
            r.spec.method.label(),
            r.spec.pattern,
            r.spec.network,
            r.spec.scenario,
            r.replications.len(),
            m,
            sd
        )
        .unwrap();
    }
    out
}

/// `pattern,cluster,coefficient,truth,mean,sd` rows for fits on the
/// simulation design.
pub fn table2_csv<F: Real>(results: &[ExperimentResult<F>]) -> String {
    let mut out = String::from("method,pattern,cluster,coefficient,truth,mean,sd\n");
    for r in results.iter().filter(|r| r.spec.design == DesignChoice::Simulation) {
        for (k, j, truth, m, sd) in r.gamma_recovery() {
            writeln!(
                out,
                "{},{},{},theta{},{},{:.6},{:.6}",
                r.spec.method.label(),
                r.spec.pattern,
                k + 1,
                j + 1,
                truth,
                m,
                sd
            )
            .unwrap();
        }
    }
    out
}

/// Per-cluster descriptive statistics of a raw panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats<F> {
    pub size: usize,
    pub average: F,
    pub sd: F,
    pub median: F,
    pub mad: F,
    pub min: F,
    pub max: F,
    /// Per-site OLS slope on `t` times 120, averaged over the cluster.
    pub decadal_increase: F,
    /// Median over site-years (complete years only) of the within-year IQR.
    pub intra_annual_iqr: F,
}

pub fn cluster_summary<F: Real>(
    panel: &TimeSeriesPanel<F>,
    labels: &[usize],
    k: usize,
    months_per_year: usize,
) -> Result<Vec<ClusterStats<F>>> {
    if labels.len() != panel.n_sites() {
        return Err(Error::Shape(format!("{} labels for {} sites", labels.len(), panel.n_sites())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {} outside 1..={k}", l + 1)));
    }
    if months_per_year == 0 {
        return Err(Error::invalid("months per year must be positive"));
    }
    let years = panel.n_times() / months_per_year;
    (0..k)
        .map(|l| {
            let sites: Vec<usize> = (0..panel.n_sites()).filter(|&i| labels[i] == l).collect();
            if sites.is_empty() {
                let nan = F::nan();
                return Ok(ClusterStats {
                    size: 0,
                    average: nan,
                    sd: nan,
                    median: nan,
                    mad: nan,
                    min: nan,
                    max: nan,
                    decadal_increase: nan,
                    intra_annual_iqr: nan,
                });
            }
            let values: Vec<F> = sites.iter().flat_map(|&i| panel.series(i).iter().copied()).collect();
            let slopes: Vec<F> = sites
                .iter()
                .map(|&i| stats::ols_slope(panel.series(i)) * F::lit(120.0))
                .collect();
            let mut iqrs = Vec::with_capacity(sites.len() * years);
            for &i in &sites {
                for chunk in panel.series(i).chunks_exact(months_per_year) {
                    iqrs.push(stats::iqr(chunk)?);
                }
            }
            let sd = if values.len() > 1 { stats::std_dev(&values) } else { F::zero() };
            Ok(ClusterStats {
                size: sites.len(),
                average: stats::mean(&values),
                sd,
                median: stats::median(&values)?,
                mad: stats::mad(&values)?,
                min: values.iter().copied().fold(F::infinity(), F::min),
                max: values.iter().copied().fold(F::neg_infinity(), F::max),
                decadal_increase: stats::mean(&slopes),
                intra_annual_iqr: if iqrs.is_empty() { F::nan() } else { stats::median(&iqrs)? },
            })
        })
        .collect()
}

/// Statistics as rows, clusters as columns.
pub fn cluster_summary_csv<F: Real>(rows: &[ClusterStats<F>]) -> String {
    let mut out = String::from("statistic");
    for k in 1..=rows.len() {
        write!(out, ",cluster{k}").unwrap();
    }
    out.push('\n');
    let line = |out: &mut String, name: &str, f: &dyn Fn(&ClusterStats<F>) -> String| {
        out.push_str(name);
        for r in rows {
            write!(out, ",{}", f(r)).unwrap();
        }
        out.push('\n');
    };
    line(&mut out, "size", &|r| r.size.to_string());
    line(&mut out, "average", &|r| format!("{:.4}", r.average));
    line(&mut out, "sd", &|r| format!("{:.4}", r.sd));
    line(&mut out, "median", &|r| format!("{:.4}", r.median));
    line(&mut out, "mad", &|r| format!("{:.4}", r.mad));
    line(&mut out, "min", &|r| format!("{:.4}", r.min));
    line(&mut out, "max", &|r| format!("{:.4}", r.max));
    line(&mut out, "decadal_increase", &|r| format!("{:.4}", r.decadal_increase));
    line(&mut out, "intra_annual_iqr", &|r| format!("{:.4}", r.intra_annual_iqr));
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
