//! Experiment configuration read by the `scateq` front end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::potential::{FormFactorSpec, PotentialSpec};
use crate::scattering::{default_energies, Tolerances};
use crate::three_body::ThreeBodyGridSpec;
use crate::variational::{DensitySpec, SearchSpec};

/// Version of the config and report layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub grid: GridSpec,
    #[serde(default = "half")]
    pub reduced_mass: f64,
    pub potential: PotentialSpec,
    /// Scattering energies; defaults to twenty log-spaced values.
    #[serde(default)]
    pub energies: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub transform: Option<TransformSection>,
    #[serde(default)]
    pub soften: Option<SoftenSection>,
    #[serde(default)]
    pub three_body: Option<ThreeBodySection>,
    #[serde(default)]
    pub verify: Option<VerifySection>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn half() -> f64 {
    0.5
}

/// Rank-one equivalence `A = 1 + f|g⟩⟨g|` at a fixed strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    pub lambda: f64,
    pub form_factor: FormFactorSpec,
    /// Rescale `g` to unit norm on the grid.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftenSection {
    pub form_factor: FormFactorSpec,
    #[serde(default)]
    pub normalize: bool,
    pub density: DensitySpec,
    #[serde(default)]
    pub search: SearchSpec,
}

/// Connected generator `λ|χ⟩⟨χ|` with `χ(p,q) = exp(−p²/w_p² − q²/w_q²)`,
/// normalised on the tensor grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectedSection {
    pub lambda: f64,
    pub width_p: f64,
    pub width_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeBodySection {
    pub grid: ThreeBodyGridSpec,
    /// Pair strengths in the order `(12)(3)`, `(23)(1)`, `(31)(2)`.
    pub pair_lambdas: [f64; 3],
    pub form_factor: FormFactorSpec,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub connected: Option<ConnectedSection>,
    /// Multipliers applied to the connected generator in the independence sweep.
    #[serde(default = "default_sweep")]
    pub sweep: Vec<f64>,
    /// Seed of the recoupling between pair coordinates.
    #[serde(default)]
    pub seed: u64,
}

fn default_sweep() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0]
}

/// Two observables files written by an earlier run, resolved relative to
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub before: PathBuf,
    pub after: PathBuf,
}

/// A parsed config together with the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
        let config = Self::from_json_str(text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, hash: sha256_hex(&bytes), base_dir })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.reduced_mass.is_finite() && self.reduced_mass > 0.0) {
            return Err(Error::Config("reduced_mass must be positive".into()));
        }
        self.potential.validate()?;
        if let Some(e) = &self.energies {
            if e.is_empty() || e.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::Config("energies must be a non-empty list of positive numbers".into()));
            }
        }
        if let Some(t) = &self.tolerances {
            check_tolerances(t)?;
        }
        if let Some(t) = &self.transform {
            t.form_factor.validate()?;
        }
        if let Some(s) = &self.soften {
            s.form_factor.validate()?;
            s.density.validate()?;
            s.search.validate()?;
        }
        if let Some(t) = &self.three_body {
            t.form_factor.validate()?;
            if t.sweep.is_empty() {
                return Err(Error::Config("three_body.sweep must not be empty".into()));
            }
            if let Some(c) = &t.connected {
                if !(c.width_p > 0.0 && c.width_q > 0.0) {
                    return Err(Error::Config("connected widths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn energies(&self) -> Vec<f64> {
        self.energies.clone().unwrap_or_else(|| default_energies(self.reduced_mass))
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.unwrap_or_default()
    }
}

pub fn check_tolerances(t: &Tolerances) -> Result<()> {
    if !(t.phase.is_finite() && t.phase > 0.0 && t.binding.is_finite() && t.binding > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
