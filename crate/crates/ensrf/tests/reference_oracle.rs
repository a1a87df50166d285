//! Cross-checks the filter against a separately-coded brute-force
//! implementation of the analysis recursions on 1x1 and 2x2 systems.
//!
//! The oracle works on flat row-major arrays and inverts the innovation
//! covariance by adjugate, so it shares no code path with the library's
//! Cholesky-based gain.

use ensrf::kalman::{kf_run, GaussianState, LinearModelStep, ObservationSpec};
use ensrf::linalg::SymmetricPsd;
use ensrf::seeding::substream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn mul(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            for k in 0..inner {
                out[i * cols + j] += a[i * inner + k] * b[k * cols + j];
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// adjugate inverse, 1x1 and 2x2 only
fn inverse_small(a: &[f64], n: usize) -> Vec<f64> {
    match n {
        1 => vec![1.0 / a[0]],
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            vec![a[3] / det, -a[1] / det, -a[2] / det, a[0] / det]
        }
        _ => panic!("oracle only handles n <= 2"),
    }
}

struct OracleProblem {
    n: usize,
    m: usize,
    init_mean: Vec<f64>,
    init_cov: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    shifts: Vec<Vec<f64>>,
    operators: Vec<Vec<f64>>,
    noises: Vec<Vec<f64>>,
    data: Vec<Vec<f64>>,
}

// the filtering recursions, written directly from the defining formulas
fn oracle_run(p: &OracleProblem) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (p.n, p.m);
    let mut mean = p.init_mean.clone();
    let mut cov = p.init_cov.clone();
    let mut out = Vec::new();
    for k in 0..p.transitions.len() {
        let big_m = &p.transitions[k];
        let h = &p.operators[k];
        let r = &p.noises[k];
        let d = &p.data[k];

        mean = add(&mul(big_m, &mean, n, n, 1), &p.shifts[k]);
        cov = mul(&mul(big_m, &cov, n, n, n), &transpose(big_m, n, n), n, n, n);

        let hq = mul(h, &cov, m, n, n);
        let s = add(&mul(&hq, &transpose(h, m, n), m, n, m), r);
        let s_inv = inverse_small(&s, m);
        let gain = mul(&mul(&cov, &transpose(h, m, n), n, n, m), &s_inv, n, m, m);

        let innovation = sub(d, &mul(h, &mean, m, n, 1));
        mean = add(&mean, &mul(&gain, &innovation, n, m, 1));
        cov = sub(&cov, &mul(&mul(&gain, h, n, m, n), &cov, n, n, n));

        out.push((mean.clone(), cov.clone()));
    }
    out
}

fn random_problem(n: usize, m: usize, steps: usize, seed: u64) -> OracleProblem {
    let mut rng = substream(seed, &[0xdc]);
    let mut gauss = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let g = gauss(n * n);
    let init_cov = {
        // G G^T, exactly symmetric entry by entry
        let gt = transpose(&g, n, n);
        mul(&g, &gt, n, n, n)
    };
    let mut transitions = Vec::new();
    let mut shifts = Vec::new();
    let mut operators = Vec::new();
    let mut noises = Vec::new();
    let mut data = Vec::new();
    for _ in 0..steps {
        transitions.push(gauss(n * n).iter().map(|x| 0.6 * x).collect());
        shifts.push(gauss(n));
        operators.push(gauss(m * n));
        let w = gauss(m * m);
        let mut r = mul(&w, &transpose(&w, m, m), m, m, m);
        for i in 0..m {
            r[i * m + i] += 0.5;
        }
        noises.push(r);
        data.push(gauss(m));
    }
    OracleProblem {
        n,
        m,
        init_mean: gauss(n),
        init_cov,
        transitions,
        shifts,
        operators,
        noises,
        data,
    }
}

fn run_library(p: &OracleProblem) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (p.n, p.m);
    let init = GaussianState::new(
        DVector::from_vec(p.init_mean.clone()),
        SymmetricPsd::new(DMatrix::from_row_slice(n, n, &p.init_cov)).unwrap(),
    )
    .unwrap();
    let models: Vec<LinearModelStep> = (0..p.transitions.len())
        .map(|k| {
            LinearModelStep::new(
                DMatrix::from_row_slice(n, n, &p.transitions[k]),
                DVector::from_vec(p.shifts[k].clone()),
            )
            .unwrap()
        })
        .collect();
    let observations: Vec<ObservationSpec> = (0..p.transitions.len())
        .map(|k| {
            ObservationSpec::new(
                DMatrix::from_row_slice(m, n, &p.operators[k]),
                SymmetricPsd::new(DMatrix::from_row_slice(m, m, &p.noises[k])).unwrap(),
                DVector::from_vec(p.data[k].clone()),
            )
            .unwrap()
        })
        .collect();
    kf_run(&init, &models, &observations)
        .unwrap()
        .into_iter()
        .map(|step| {
            let mean = step.analysis.mean.iter().copied().collect();
            let cov = (0..n)
                .flat_map(|i| {
                    let c = step.analysis.cov.matrix().clone();
                    (0..n).map(move |j| c[(i, j)]).collect::<Vec<_>>()
                })
                .collect();
            (mean, cov)
        })
        .collect()
}

fn assert_matches(p: &OracleProblem, label: &str) {
    let expected = oracle_run(p);
    let got = run_library(p);
    assert_eq!(expected.len(), got.len());
    for (k, ((em, ec), (gm, gc))) in expected.iter().zip(&got).enumerate() {
        let mean_scale = em.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
        let cov_scale = ec.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
        for (e, g) in em.iter().zip(gm) {
            assert!(
                (e - g).abs() <= 1e-12 * mean_scale,
                "{label} step {} mean: oracle {e}, library {g}",
                k + 1
            );
        }
        for (e, g) in ec.iter().zip(gc) {
            assert!(
                (e - g).abs() <= 1e-12 * cov_scale,
                "{label} step {} cov: oracle {e}, library {g}",
                k + 1
            );
        }
    }
}

#[test]
fn scalar_systems_match_brute_force() {
    for seed in 0..20 {
        let p = random_problem(1, 1, 6, seed);
        assert_matches(&p, "1x1");
    }
}

#[test]
fn two_dimensional_systems_match_brute_force() {
    for seed in 100..120 {
        let p = random_problem(2, 2, 6, seed);
        assert_matches(&p, "2x2");
    }
}

#[test]
fn mixed_dimension_systems_match_brute_force() {
    for seed in 200..210 {
        let p = random_problem(2, 1, 5, seed);
        assert_matches(&p, "2x1");
    }
}
