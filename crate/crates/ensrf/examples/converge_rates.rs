//! The flagship experiment at desk scale: run the exact filter once, then
//! many independent square-root ensemble filter replicates per ensemble
//! size, and fit the rate at which the ensemble analysis statistics
//! approach the exact ones. Theory says every slope is -1/2, at every step
//! and every Lp order.
//!
//! ```bash
//! cargo run --release --example converge_rates
//! ```

use ensrf::convergence::{
    make_synthetic_problem, srf_vs_kf_experiment, ErrorKind, ExperimentConfig, InitScheme,
};

fn main() {
    let cfg = ExperimentConfig {
        problem: make_synthetic_problem(4, 2, 5, 31415).expect("problem builds"),
        ensemble_sizes: vec![16, 64, 256, 1024],
        replications: 100,
        p_values: vec![1.0, 2.0],
        seed: 9,
        init: InitScheme::Sample,
    };
    println!(
        "n={}, m={}, K={}, sizes {:?}, {} replicates",
        cfg.problem.state_dim(),
        cfg.problem.obs_dim(),
        cfg.problem.steps(),
        cfg.ensemble_sizes,
        cfg.replications
    );
    let report = srf_vs_kf_experiment(&cfg).expect("experiment runs");

    println!("\nempirical L2 errors of the analysis mean:");
    println!("step |     N=16    |    N=64     |    N=256    |   N=1024");
    println!("-----|-------------|-------------|-------------|------------");
    for step in 0..=cfg.problem.steps() {
        let mut line = format!("{step:4} |");
        for &size in &cfg.ensemble_sizes {
            let row = report
                .rows
                .iter()
                .find(|r| r.step == step && r.p == 2.0 && r.ensemble_size == size)
                .unwrap();
            line.push_str(&format!(" {:11.4e} |", row.mean_err));
        }
        println!("{}", line.trim_end_matches(" |"));
    }

    println!("\nfitted log-log slopes (theory -0.5):");
    println!("step |  p  |    mean | cov (spectral) | cov (HS)");
    println!("-----|-----|---------|----------------|---------");
    for step in 0..=cfg.problem.steps() {
        for &p in &cfg.p_values {
            let slope_of = |kind: ErrorKind| {
                report
                    .slopes
                    .iter()
                    .find(|s| s.step == step && s.p == p && s.kind == kind)
                    .map(|s| s.slope)
                    .unwrap_or(f64::NAN)
            };
            println!(
                "{step:4} | {p:3} | {:7.3} | {:14.3} | {:8.3}",
                slope_of(ErrorKind::Mean),
                slope_of(ErrorKind::CovSpectral),
                slope_of(ErrorKind::CovHs),
            );
        }
    }
}
