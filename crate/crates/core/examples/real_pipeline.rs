//! Basis selection and a fit on the synthetic 251-site monthly panel.

use std::time::Instant;

use quantclust::basis::build_modulation_design;
use quantclust::graph::NetworkKind;
use quantclust::mcmc::{fit_model, McmcConfig};
use quantclust::panel::normalize_anomalies;
use quantclust::quantfit::{basis_grid, select_basis};
use quantclust::sim::{adjusted_rand_index, simulate_modulation_panel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_grid: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let (raw, truth) = simulate_modulation_panel::<f64>(251, 372, 1)?;
    let panel = normalize_anomalies(&raw)?;
    let t0 = Instant::now();
    let grid: Vec<_> = basis_grid(4, 8).into_iter().rev().take(n_grid).collect();
    let sel = select_basis(&panel, 0.5, &grid, 2, 12.0)?;
    println!("select {n_grid} points: {:?} best {:?}", t0.elapsed(), sel.best);
    let design = build_modulation_design::<f64>(372, 7, 8, 4, 2, 12.0)?;
    let net = NetworkKind::Lattice(8).build(panel.coords())?;
    let cfg = McmcConfig::real_data(6);
    let t0 = Instant::now();
    let fit = fit_model(&panel, &design, &net, &cfg)?;
    println!(
        "fit {:?} ari {:.3} waic {:.1} abc {:.3}",
        t0.elapsed(),
        adjusted_rand_index(&fit.summary.memberships, &truth)?,
        fit.waic,
        fit.draws.abc_acceptance_rate()
    );
    Ok(())
}
