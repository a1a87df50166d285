//! Run configuration: the TOML schema the CLI consumes, conversion to
//! runtime problem/experiment types, and canonicalization + hashing so a
//! run manifest can pin exactly which config produced which outputs.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::convergence::{make_synthetic_problem, FilteringProblem, InitScheme};
use crate::ensemble::FactoredGaussian;
use crate::error::{Error, Result};
use crate::kalman::{LinearModelStep, ObservationSpec};
use crate::linalg::SymmetricPsd;

/// Top-level config file: a problem plus the sections the individual
/// commands need.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; the CLI's --seed flag overrides it.
    pub seed: Option<u64>,
    pub problem: ProblemConfig,
    pub srf: Option<SrfSection>,
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Seed-generated stable problem with simulated-truth data.
    Synthetic {
        state_dim: usize,
        obs_dim: usize,
        steps: usize,
        seed: u64,
    },
    /// Fully spelled-out problem: prior mean/factor and per-step model and
    /// observation matrices (row-major nested arrays).
    Explicit {
        mean: Vec<f64>,
        factor: Vec<Vec<f64>>,
        #[serde(default, rename = "step")]
        steps: Vec<StepConfig>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub model: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
    pub observation: Vec<Vec<f64>>,
    pub noise_cov: Vec<Vec<f64>>,
    pub data: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrfSection {
    pub ensemble_size: usize,
    #[serde(default)]
    pub init: InitScheme,
    #[serde(default)]
    pub dump_ensemble: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub ensemble_sizes: Vec<usize>,
    pub replications: usize,
    pub p_values: Vec<f64>,
    #[serde(default)]
    pub init: InitScheme,
}

/// Reads and parses a config file, returning it with its canonical text.
pub fn load_run_config(path: &Path) -> Result<(RunConfig, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("config {} does not parse: {e}", path.display())))?;
    let value: toml::Value = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("config {} does not parse: {e}", path.display())))?;
    Ok((config, canonical_text(&value)))
}

/// Canonical single-line rendering: keys sorted recursively, no
/// insignificant whitespace, floats in shortest round-trip form. The config
/// hash is taken over this text.
pub fn canonical_text(value: &toml::Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::String(s) => out.push_str(&format!("{s:?}")),
        toml::Value::Integer(i) => out.push_str(&i.to_string()),
        toml::Value::Float(f) => out.push_str(&f.to_string()),
        toml::Value::Boolean(b) => out.push_str(&b.to_string()),
        toml::Value::Datetime(d) => out.push_str(&d.to_string()),
        toml::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        toml::Value::Table(table) => {
            let mut keys: Vec<&String> = table.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{key:?}="));
                write_canonical(&table[*key], out);
            }
            out.push('}');
        }
    }
}

/// SHA-256 of the canonical config text, hex-encoded.
pub fn config_hash(canonical: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("{what} must have at least one row")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!(
            "{what} rows must be nonempty and of equal length"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

/// Builds the runtime filtering problem a config describes.
pub fn build_problem(config: &ProblemConfig) -> Result<FilteringProblem> {
    match config {
        ProblemConfig::Synthetic {
            state_dim,
            obs_dim,
            steps,
            seed,
        } => make_synthetic_problem(*state_dim, *obs_dim, *steps, *seed),
        ProblemConfig::Explicit {
            mean,
            factor,
            steps,
        } => {
            let prior = FactoredGaussian::new(
                DVector::from_vec(mean.clone()),
                matrix_from_rows(factor, "prior factor")?,
            )?;
            let mut models = Vec::with_capacity(steps.len());
            let mut observations = Vec::with_capacity(steps.len());
            for (k, step) in steps.iter().enumerate() {
                let label = k + 1;
                let model = LinearModelStep::new(
                    matrix_from_rows(&step.model, &format!("step {label} model"))?,
                    DVector::from_vec(step.shift.clone()),
                )
                .map_err(|e| e.at_step(label))?;
                let noise = SymmetricPsd::new(matrix_from_rows(
                    &step.noise_cov,
                    &format!("step {label} noise covariance"),
                )?)
                .map_err(|e| e.at_step(label))?;
                let obs = ObservationSpec::new(
                    matrix_from_rows(&step.observation, &format!("step {label} observation"))?,
                    noise,
                    DVector::from_vec(step.data.clone()),
                )
                .map_err(|e| e.at_step(label))?;
                models.push(model);
                observations.push(obs);
            }
            let problem = FilteringProblem {
                prior,
                models,
                observations,
            };
            problem.validate()?;
            Ok(problem)
        }
    }
}
