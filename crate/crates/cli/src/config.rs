use std::path::PathBuf;

use nalgebra::DVector;
use paneitz_core::{BackendDescriptor, ConformalFactor, Error, ManifoldBackend, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// A function on the manifold: a named preset/expression or explicit basis
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorSpec {
    Preset(String),
    Coefficients(Vec<f64>),
}

impl FactorSpec {
    /// Reads `arg` as a JSON file (a bare array, or `{"coefficients": [...]}`)
    /// when such a file exists, and as a preset otherwise.
    pub fn from_arg(arg: &str) -> Result<Self> {
        let path = std::path::Path::new(arg);
        if !path.is_file() {
            return Ok(FactorSpec::Preset(arg.to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{arg}: {e}")))?;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum File {
            Bare(Vec<f64>),
            Wrapped { coefficients: Vec<f64> },
        }
        match serde_json::from_str::<File>(&text).map_err(|e| Error::Config(format!("{arg}: {e}")))? {
            File::Bare(c) | File::Wrapped { coefficients: c } => Ok(FactorSpec::Coefficients(c)),
        }
    }

    fn random_coeffs(backend: &ManifoldBackend, magnitude: f64, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(backend.basis_dim(), |a, _| {
            if (1..=2).contains(&backend.degrees()[a]) {
                rng.gen_range(-magnitude..=magnitude)
            } else {
                0.0
            }
        })
    }

    fn random_magnitude(preset: &str) -> Result<Option<f64>> {
        match preset.strip_prefix("random:") {
            None => Ok(None),
            Some(m) => {
                let m: f64 = m.parse().map_err(|_| Error::Config(format!("bad magnitude in '{preset}'")))?;
                if !(m >= 0.0 && m.is_finite()) {
                    return Err(Error::Config(format!("magnitude must be non-negative in '{preset}'")));
                }
                Ok(Some(m))
            }
        }
    }

    fn node_values(backend: &ManifoldBackend, preset: &str) -> Result<DVector<f64>> {
        let names = expr::variable_names(backend);
        let e = expr::parse(preset, &names).map_err(|m| Error::Config(format!("preset '{preset}': {m}")))?;
        let values = expr::variable_values(backend);
        Ok(DVector::from_iterator(values.len(), values.iter().map(|v| e.eval(v))))
    }

    /// Basis coefficients; expressions are L²-projected onto the basis.
    pub fn coefficients(&self, backend: &ManifoldBackend, seed: u64) -> Result<DVector<f64>> {
        match self {
            FactorSpec::Coefficients(c) => {
                if c.len() != backend.basis_dim() {
                    return Err(Error::Config(format!("{} coefficients given, basis has {}", c.len(), backend.basis_dim())));
                }
                Ok(DVector::from_column_slice(c))
            }
            FactorSpec::Preset(p) if p == "zero" => Ok(DVector::zeros(backend.basis_dim())),
            FactorSpec::Preset(p) => match Self::random_magnitude(p)? {
                Some(m) => Ok(Self::random_coeffs(backend, m, seed)),
                None => Ok(backend.project(&Self::node_values(backend, p)?)),
            },
        }
    }

    pub fn factor(&self, backend: &ManifoldBackend, seed: u64) -> Result<ConformalFactor> {
        let c = self.coefficients(backend, seed)?;
        ConformalFactor::from_coeffs(backend, c).map_err(|e| Error::Config(e.to_string()))
    }

    /// Node values of a direction. Expressions are evaluated pointwise;
    /// `random:<m>` directions have their mean against `density` removed.
    pub fn direction(&self, backend: &ManifoldBackend, seed: u64, density: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            FactorSpec::Coefficients(_) => Ok(backend.evaluate(&self.coefficients(backend, seed)?)),
            FactorSpec::Preset(p) if p == "zero" => Ok(DVector::zeros(backend.num_nodes())),
            FactorSpec::Preset(p) => match Self::random_magnitude(p)? {
                Some(m) => {
                    let v = backend.evaluate(&Self::random_coeffs(backend, m, seed.wrapping_add(1)));
                    let d = backend.weights().component_mul(density);
                    Ok(v.add_scalar(-v.dot(&d) / d.sum()))
                }
                None => Self::node_values(backend, p),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub backend: BackendDescriptor,
    pub w: FactorSpec,
    pub direction: Option<FactorSpec>,
    pub k: usize,
    pub count: Option<usize>,
    pub steps: usize,
    pub step_size: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.k == 0 {
            return Err(Error::Config("k is 1-based".into()));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
