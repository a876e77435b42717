//! Runs one simulation-study cell and prints the ARI of each replication.
//!
//! `cargo run --release --example sim_study -- circles example1 spatial 5 [network] [design]`

use quantclust::config::DesignChoice;
use quantclust::sim::{run_experiment, table1_csv, table2_csv, ExperimentSpec, Method};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let get = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let method = match get(2, "spatial").as_str() {
        "spatial" => Method::Spatial,
        _ => Method::Independent,
    };
    let mut spec = ExperimentSpec::new(
        get(0, "circles").parse()?,
        get(1, "example1").parse()?,
        method,
        get(3, "5").parse()?,
        get(6, "2024").parse()?,
    );
    spec.network = get(4, "4nn").parse()?;
    spec.design = get(5, "simulation").parse::<DesignChoice>()?;
    let started = std::time::Instant::now();
    let res = run_experiment::<f64>(&spec)?;
    for r in &res.replications {
        println!("rep {} ari {:.4} waic {:.1} abc {:.3}", r.index, r.ari, r.waic, r.abc_acceptance);
    }
    print!("{}", table1_csv(std::slice::from_ref(&res)));
    print!("{}", table2_csv(std::slice::from_ref(&res)));
    println!("elapsed {:.1?}", started.elapsed());
    Ok(())
}
