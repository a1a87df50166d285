//! Randomized verification of the pointwise gain/analysis inequalities:
//! evaluate both sides of every bound on Wishart-style inputs with
//! condition numbers up to 1e6 and report the worst slack seen per check.
//!
//! ```bash
//! cargo run --example bounds_fuzz
//! ```

use ensrf::bounds::{fuzz_all_bounds, FuzzConfig, VIOLATION_TOL};

fn main() {
    let cfg = FuzzConfig::new(5, 5, 2000, 99);
    println!(
        "fuzzing {} trials at n={}, m={}, condition numbers up to {:.0e}",
        cfg.trials, cfg.state_dim, cfg.obs_dim, cfg.max_condition
    );
    let summary = fuzz_all_bounds(&cfg).expect("campaign runs");

    println!("\ncheck                        | worst slack   | relative");
    println!("-----------------------------|---------------|----------");
    for (check, report) in &summary.worst {
        println!(
            "{check:28} | {:13.4e} | {:9.2e}",
            report.slack,
            report.relative_slack()
        );
    }
    println!(
        "\n{} of {} checks passed at tolerance {VIOLATION_TOL:.0e}; {} violations",
        summary.passes,
        summary.trials * summary.checks_per_trial,
        summary.violations.len()
    );
    for v in &summary.violations {
        println!("violation: {} at {}", v.check, v.inputs_digest);
    }
}
