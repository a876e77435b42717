//! WAIC over `K = 2, 3, 4` on five simulated circle panels.

use quantclust::basis::build_simulation_design;
use quantclust::graph::NetworkKind;
use quantclust::mcmc::{select_k, waic_argmin, McmcConfig};
use quantclust::sim::{make_pattern, replication_seeds, simulate_panel_example1, PatternKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pattern = make_pattern(PatternKind::Circles, 30, 30)?;
    let design = build_simulation_design::<f64>(100)?;
    let net = NetworkKind::Lattice(4).build(&pattern.coords())?;
    for rep in 0..5 {
        let (data_seed, chain_seed) = replication_seeds(std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7), rep);
        let panel = simulate_panel_example1::<f64>(&pattern, 100, 0.5, data_seed)?;
        let cfg = McmcConfig { seed: chain_seed, ..McmcConfig::simulation(3) };
        let fits = select_k(&panel, &design, &net, &cfg, &[2, 3, 4])?;
        let w: Vec<String> = fits.iter().map(|(k, f)| format!("K={k}: {:.1}", f.waic)).collect();
        println!("rep {rep} {} -> {:?}", w.join(", "), waic_argmin(&fits));
        for (k, f) in &fits {
            let mut sizes = vec![0; *k];
            f.summary.memberships.iter().for_each(|&l| sizes[l] += 1);
            let lppd_terms: usize = f.draws.loglik.len();
            println!("   K={k} sizes {sizes:?} beta {:?} alpha {:?} draws {lppd_terms}", f.summary.beta_mean, f.summary.alpha_mean);
        }
    }
    Ok(())
}
