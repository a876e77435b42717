//! Site networks and the Potts membership field defined on them.
//!
//! Labels are zero-based throughout (`0..K`); file formats add one.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Positions of the sites of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteCoords {
    /// Integer lattice positions `(row, col)`.
    Grid(Vec<(i64, i64)>),
    /// Real positions, e.g. `(lon, lat)`.
    Planar(Vec<(f64, f64)>),
}

impl SiteCoords {
    pub fn len(&self) -> usize {
        match self {
            SiteCoords::Grid(v) => v.len(),
            SiteCoords::Planar(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Undirected neighborhood system over `n_sites` sites.
#[derive(Debug, Clone)]
pub struct SpatialNetwork {
    neighbors: Vec<Vec<usize>>,
    coords: SiteCoords,
    k: usize,
    warnings: Vec<String>,
}

impl SpatialNetwork {
    /// Builds a network from explicit adjacency lists, checking symmetry and
    /// loop-freeness. Lists are sorted.
    pub fn from_neighbors(
        mut neighbors: Vec<Vec<usize>>,
        coords: SiteCoords,
        k: usize,
    ) -> Result<Self> {
        let n = neighbors.len();
        if coords.len() != n {
            return Err(Error::Shape(format!(
                "{} coordinates for {n} sites",
                coords.len()
            )));
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        for (i, list) in neighbors.iter().enumerate() {
            for &j in list {
                if j >= n {
                    return Err(Error::invalid(format!("neighbor {j} of site {i} out of range")));
                }
                if j == i {
                    return Err(Error::invalid(format!("self-loop at site {i}")));
                }
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(Error::invalid(format!("edge {i}->{j} has no reverse")));
                }
            }
        }
        Ok(Self {
            neighbors,
            coords,
            k,
            warnings: Vec::new(),
        })
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Nominal neighborhood size the network was built with.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coords(&self) -> &SiteCoords {
        &self.coords
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Writes `site_id,neighbor_id`, one row per directed edge, 1-based ids.
    pub fn write_edges_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("site_id,neighbor_id\n");
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                out.push_str(&format!("{},{}\n", i + 1, j + 1));
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Writes `site_id,row,col` (grid) or `site_id,lon,lat` (planar).
    pub fn write_coords_csv(&self, path: &Path) -> Result<()> {
        let mut f = Vec::new();
        match &self.coords {
            SiteCoords::Grid(v) => {
                writeln!(f, "site_id,row,col").unwrap();
                for (i, (r, c)) in v.iter().enumerate() {
                    writeln!(f, "{},{r},{c}", i + 1).unwrap();
                }
            }
            SiteCoords::Planar(v) => {
                writeln!(f, "site_id,lon,lat").unwrap();
                for (i, (x, y)) in v.iter().enumerate() {
                    writeln!(f, "{},{:.16e},{:.16e}", i + 1, x, y).unwrap();
                }
            }
        }
        std::fs::write(path, f).map_err(|e| Error::io(path, e))
    }
}

fn lattice_offsets(k: usize) -> Result<&'static [(i64, i64)]> {
    const ROOK: [(i64, i64); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
    const QUEEN: [(i64, i64); 8] = [
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, -1),
        (0, 1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];
    const THIRD: [(i64, i64); 12] = [
        (-2, 0),
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, -2),
        (0, -1),
        (0, 1),
        (0, 2),
        (1, -1),
        (1, 0),
        (1, 1),
        (2, 0),
    ];
    match k {
        4 => Ok(&ROOK),
        8 => Ok(&QUEEN),
        12 => Ok(&THIRD),
        _ => Err(Error::invalid(format!(
            "unsupported lattice neighborhood size {k}; expected 4, 8 or 12"
        ))),
    }
}

/// Lattice neighborhood over an arbitrary set of occupied grid cells
/// `(row, col)`. Offsets that fall on unoccupied cells are dropped.
pub fn build_lattice_knn(cells: &[(i64, i64)], k: usize) -> Result<SpatialNetwork> {
    let offsets = lattice_offsets(k)?;
    let index: std::collections::HashMap<(i64, i64), usize> =
        cells.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    if index.len() != cells.len() {
        return Err(Error::invalid("duplicate grid cells"));
    }
    let neighbors = cells
        .iter()
        .map(|&(r, c)| {
            offsets
                .iter()
                .filter_map(|&(dr, dc)| index.get(&(r + dr, c + dc)).copied())
                .collect()
        })
        .collect();
    SpatialNetwork::from_neighbors(neighbors, SiteCoords::Grid(cells.to_vec()), k)
}

/// Full `rows x cols` lattice, sites numbered row-major.
///
/// `k = 4` is rook adjacency, `k = 8` queen adjacency and `k = 12` adds the
/// four cells two steps away along the axes.
pub fn build_grid_knn(rows: usize, cols: usize, k: usize) -> Result<SpatialNetwork> {
    lattice_offsets(k)?;
    if rows < 2 || cols < 2 {
        return Err(Error::invalid(format!("degenerate {rows}x{cols} grid")));
    }
    let cells: Vec<(i64, i64)> = (0..rows as i64)
        .flat_map(|r| (0..cols as i64).map(move |c| (r, c)))
        .collect();
    build_lattice_knn(&cells, k)
}

/// `k` nearest sites by Euclidean distance, symmetrized by union. Ties are
/// broken by the lower site index; duplicate positions are reported in
/// [`SpatialNetwork::warnings`].
pub fn build_irregular_knn(coords: &[(f64, f64)], k: usize) -> Result<SpatialNetwork> {
    let n = coords.len();
    if k == 0 || n <= k {
        return Err(Error::invalid(format!("need more than k={k} sites, got {n}")));
    }
    if coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("non-finite coordinate"));
    }
    let mut warnings = Vec::new();
    let mut neighbors = vec![Vec::new(); n];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        let (xi, yi) = coords[i];
        for (j, &(xj, yj)) in coords.iter().enumerate() {
            if j != i {
                let d2 = (xi - xj).powi(2) + (yi - yj).powi(2);
                if d2 == 0.0 && i < j {
                    warnings.push(format!("sites {} and {} share a position", i + 1, j + 1));
                }
                order.push((d2, j));
            }
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &order[..k] {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
    }
    let mut net =
        SpatialNetwork::from_neighbors(neighbors, SiteCoords::Planar(coords.to_vec()), k)?;
    net.warnings = warnings;
    Ok(net)
}

/// Network recipe as given on the command line: `4nn`, `8nn`, `12nn` or
/// `knn:<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    Lattice(usize),
    Knn(usize),
}

impl std::str::FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4nn" => Ok(NetworkKind::Lattice(4)),
            "8nn" => Ok(NetworkKind::Lattice(8)),
            "12nn" => Ok(NetworkKind::Lattice(12)),
            _ => s
                .strip_prefix("knn:")
                .and_then(|k| k.parse().ok())
                .filter(|&k: &usize| k > 0)
                .map(NetworkKind::Knn)
                .ok_or_else(|| Error::invalid(format!("unknown network `{s}`"))),
        }
    }
}

impl std::fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NetworkKind::Lattice(k) => write!(f, "{k}nn"),
            NetworkKind::Knn(k) => write!(f, "knn:{k}"),
        }
    }
}

impl NetworkKind {
    /// Builds the network over the given sites. Lattice recipes on real
    /// coordinates fall back to `k` nearest neighbors.
    pub fn build(&self, coords: &SiteCoords) -> Result<SpatialNetwork> {
        match (self, coords) {
            (NetworkKind::Lattice(k), SiteCoords::Grid(cells)) => build_lattice_knn(cells, *k),
            (NetworkKind::Lattice(k), SiteCoords::Planar(pts)) => build_irregular_knn(pts, *k),
            (NetworkKind::Knn(k), SiteCoords::Planar(pts)) => build_irregular_knn(pts, *k),
            (NetworkKind::Knn(k), SiteCoords::Grid(cells)) => {
                let pts: Vec<(f64, f64)> =
                    cells.iter().map(|&(r, c)| (c as f64, r as f64)).collect();
                build_irregular_knn(&pts, *k)
            }
        }
    }
}

/// Potts field parameters: intercepts `alpha` (with `alpha[0] = 0`) and
/// within-cluster couplings `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PottsParams<F> {
    pub alpha: Vec<F>,
    pub beta: Vec<F>,
}

impl<F: Real> PottsParams<F> {
    pub fn new(alpha: Vec<F>, beta: Vec<F>) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return Err(Error::Shape("alpha and beta must have equal nonzero length".into()));
        }
        if alpha[0] != F::zero() {
            return Err(Error::invalid("alpha[0] must be exactly 0"));
        }
        if beta.iter().any(|b| !(*b >= F::zero())) {
            return Err(Error::invalid("beta must be nonnegative"));
        }
        Ok(Self { alpha, beta })
    }

    /// `alpha = 0`, `beta = b` for every cluster.
    pub fn uniform(k: usize, b: F) -> Self {
        Self {
            alpha: vec![F::zero(); k],
            beta: vec![b; k],
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.alpha.len()
    }
}

/// Number of neighbors of `i` carrying `label`, whatever the label of `i`.
pub fn count_matching_neighbors(
    i: usize,
    label: usize,
    c: &[usize],
    net: &SpatialNetwork,
) -> Result<usize> {
    if i >= net.n_sites() || c.len() != net.n_sites() {
        return Err(Error::invalid(format!("site {i} out of range")));
    }
    Ok(net.neighbors(i).iter().filter(|&&j| c[j] == label).count())
}

/// Fills `counts[k]` with the number of neighbors of `i` labelled `k`.
#[inline]
pub(crate) fn neighbor_label_counts(i: usize, c: &[usize], net: &SpatialNetwork, counts: &mut [usize]) {
    counts.iter_mut().for_each(|x| *x = 0);
    for &j in net.neighbors(i) {
        counts[c[j]] += 1;
    }
}

/// Normalizes log-weights in place into probabilities (max-subtraction).
pub(crate) fn normalize_log_weights<F: Real>(w: &mut [F]) {
    debug_assert!(w.iter().all(|x| !x.is_nan()), "NaN log-weight {w:?}");
    let max = w.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        total = total + *x;
    }
    for x in w.iter_mut() {
        *x = *x / total;
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_categorical<F: Real, R: Rng + ?Sized>(probs: &[F], rng: &mut R) -> usize {
    let u = F::open01(rng);
    let mut acc = F::zero();
    for (k, &p) in probs.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return k;
        }
    }
    // rounding left the cumulative sum just below u
    probs.iter().rposition(|&p| p > F::zero()).unwrap_or(0)
}

fn check_labels(c: &[usize], k: usize, net: &SpatialNetwork) -> Result<()> {
    if c.len() != net.n_sites() {
        return Err(Error::Shape(format!(
            "{} memberships for {} sites",
            c.len(),
            net.n_sites()
        )));
    }
    if let Some(bad) = c.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} outside 0..{k}")));
    }
    Ok(())
}

/// Full conditional of `c_i` under the Potts field:
/// `p(k) ∝ exp(alpha_k + beta_k * n_{k,i})`.
pub fn potts_conditional_probs<F: Real>(
    i: usize,
    c: &[usize],
    params: &PottsParams<F>,
    net: &SpatialNetwork,
) -> Result<Vec<F>> {
    if i >= net.n_sites() {
        return Err(Error::invalid(format!("site {i} out of range")));
    }
    check_labels(c, params.k(), net)?;
    let mut counts = vec![0; params.k()];
    let mut probs = vec![F::zero(); params.k()];
    conditional_into(i, c, params, net, &mut counts, &mut probs);
    Ok(probs)
}

#[inline]
fn conditional_into<F: Real>(
    i: usize,
    c: &[usize],
    params: &PottsParams<F>,
    net: &SpatialNetwork,
    counts: &mut [usize],
    probs: &mut [F],
) {
    neighbor_label_counts(i, c, net, counts);
    for k in 0..params.k() {
        probs[k] = params.alpha[k] + params.beta[k] * F::from_count(counts[k]);
    }
    normalize_log_weights(probs);
}

/// Site visiting order of a Gibbs sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    #[default]
    Sequential,
    /// Fresh uniform permutation per sweep.
    Random,
}

/// One Gibbs sweep of the Potts field, updating `c` in place.
pub fn potts_gibbs_sweep<F: Real, R: Rng + ?Sized>(
    c: &mut [usize],
    params: &PottsParams<F>,
    net: &SpatialNetwork,
    order: SweepOrder,
    rng: &mut R,
) -> Result<()> {
    check_labels(c, params.k(), net)?;
    let mut counts = vec![0; params.k()];
    let mut probs = vec![F::zero(); params.k()];
    let mut visit = |i: usize, c: &mut [usize], rng: &mut R| {
        conditional_into(i, c, params, net, &mut counts, &mut probs);
        c[i] = sample_categorical(&probs, rng);
    };
    match order {
        SweepOrder::Sequential => {
            for i in 0..c.len() {
                visit(i, c, rng);
            }
        }
        SweepOrder::Random => {
            let mut idx: Vec<usize> = (0..c.len()).collect();
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), rng);
            for i in idx {
                visit(i, c, rng);
            }
        }
    }
    Ok(())
}

/// Potts sufficient statistics
/// `(n_2, .., n_K, sum_i n_{1,i}, .., sum_i n_{K,i})`, where `n_{k,i}` counts
/// same-label neighbors of sites labelled `k` (every monochromatic edge is
/// counted from both ends).
pub fn sufficient_stats(c: &[usize], net: &SpatialNetwork, k: usize) -> Result<Vec<usize>> {
    check_labels(c, k, net)?;
    let mut eta = vec![0usize; 2 * k - 1];
    for &l in c {
        if l > 0 {
            eta[l - 1] += 1;
        }
    }
    for (i, &l) in c.iter().enumerate() {
        let same = net.neighbors(i).iter().filter(|&&j| c[j] == l).count();
        eta[k - 1 + l] += same;
    }
    Ok(eta)
}

/// Mean relative absolute deviation between statistic vectors. A zero
/// reference entry uses denominator 1.
pub fn eta_distance<F: Real>(eta_star: &[usize], eta_ref: &[usize]) -> Result<F> {
    if eta_star.len() != eta_ref.len() || eta_ref.is_empty() {
        return Err(Error::Shape(format!(
            "statistic lengths {} and {}",
            eta_star.len(),
            eta_ref.len()
        )));
    }
    let total: F = eta_star
        .iter()
        .zip(eta_ref)
        .map(|(&s, &r)| {
            let diff = F::from_count(s.abs_diff(r));
            diff / F::from_count(r.max(1))
        })
        .sum();
    Ok(total / F::from_count(eta_ref.len()))
}
