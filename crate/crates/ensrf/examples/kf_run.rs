//! Exact Kalman filter on a small synthetic problem: build a seeded
//! linear-Gaussian system, assimilate the data, and print the per-step
//! forecast and analysis statistics.
//!
//! ```bash
//! cargo run --example kf_run
//! ```

use ensrf::convergence::make_synthetic_problem;
use ensrf::kalman::{kf_run, GaussianState};
use ensrf::linalg::spectral_norm;

fn main() {
    let problem = make_synthetic_problem(4, 2, 8, 42).expect("problem builds");
    let init = GaussianState::new(problem.prior.mean().clone(), problem.prior.covariance())
        .expect("prior is a valid state");
    let steps = kf_run(&init, &problem.models, &problem.observations).expect("filter runs");

    println!("exact Kalman filter, n=4, m=2, K={}", steps.len());
    println!("step |  stage    | mean (first two entries) | |cov|");
    println!("-----|-----------|---------------------------|---------");
    for (k, step) in steps.iter().enumerate() {
        for (stage, state) in [("forecast", &step.forecast), ("analysis", &step.analysis)] {
            println!(
                "{:4} | {:9} | ({:9.5}, {:9.5})      | {:8.5}",
                k + 1,
                stage,
                state.mean[0],
                state.mean[1],
                spectral_norm(state.cov.matrix()).unwrap()
            );
        }
    }
    let last = &steps.last().unwrap().analysis;
    println!("\nfinal analysis covariance:");
    println!("{:.6}", last.cov.matrix());
}
