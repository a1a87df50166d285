//! Law-of-large-numbers rates for sample statistics: estimate the Lp error
//! of the sample mean and sample covariance of a scalar standard normal
//! across ensemble sizes and fit the log-log slope (theory: -1/2).
//!
//! ```bash
//! cargo run --example lln_rates
//! ```

use ensrf::convergence::{lln_cov_experiment, lln_mean_experiment, LlnConfig};
use ensrf::ensemble::FactoredGaussian;
use nalgebra::{DMatrix, DVector};

fn main() {
    let dist = FactoredGaussian::new(DVector::zeros(1), DMatrix::identity(1, 1))
        .expect("scalar prior");
    let cfg = LlnConfig {
        sizes: vec![16, 64, 256, 1024, 4096],
        replications: 400,
        p_values: vec![1.0, 2.0],
        seed: 2,
    };

    let mean_report = lln_mean_experiment(&dist, &cfg).expect("experiment runs");
    println!("sample-mean error of N standard normals ({} replicates per size)", cfg.replications);
    println!("   N   |  p=1 error  |  p=2 error  | exact 1/sqrt(N)");
    println!("-------|-------------|-------------|----------------");
    for &size in &cfg.sizes {
        let at = |p: f64| {
            mean_report
                .rows
                .iter()
                .find(|r| r.size == size && r.p == p)
                .unwrap()
                .error
        };
        println!(
            "{size:6} | {:11.5e} | {:11.5e} | {:11.5e}",
            at(1.0),
            at(2.0),
            1.0 / (size as f64).sqrt()
        );
    }
    for fit in &mean_report.fits {
        println!(
            "fitted slope (p={}): {:.3} +- {:.3}   (theory -0.5)",
            fit.p, fit.slope, fit.half_width
        );
    }

    let cov_report = lln_cov_experiment(&dist, &cfg).expect("experiment runs");
    println!("\nsample-covariance error (Hilbert-Schmidt norm)");
    for fit in &cov_report.fits {
        println!(
            "fitted slope (p={}): {:.3} +- {:.3}   (theory -0.5)",
            fit.p, fit.slope, fit.half_width
        );
    }
}
