//! Lab configuration files (TOML) and the operator/weight builders.

use crate::error::{Error, Result};
use crate::grid::{field_from_json, DyadicLattice};
use crate::operators::ModelOperator;
use crate::weights::WeightSpec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub dimension: u8,
    pub depth: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorConfig {
    /// `martingale` | `kernel` | `zero`
    pub kind: String,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Serialized field document holding the `cells x cells` kernel matrix
    /// row-major (`n` = cell count).
    #[serde(default)]
    pub kernel_file: Option<String>,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_n() -> usize {
    2
}

fn default_trials() -> usize {
    20
}

fn default_seed() -> u64 {
    42
}

/// Sweep configuration: `{lattice, weights[], exponents, operator, trials, seed}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabConfig {
    pub lattice: LatticeConfig,
    pub weights: Vec<WeightSpec>,
    pub exponents: Exponents,
    pub operator: OperatorConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl LabConfig {
    pub fn from_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn build_lattice(&self) -> Result<DyadicLattice> {
        DyadicLattice::new(self.lattice.dimension, self.lattice.depth)
    }

    pub fn build_operator(&self, lattice: DyadicLattice) -> Result<ModelOperator> {
        match self.operator.kind.as_str() {
            "martingale" => Ok(ModelOperator::martingale_random(
                lattice,
                self.operator.seed.unwrap_or(self.seed),
            )),
            "zero" => Ok(ModelOperator::zero(lattice)),
            "kernel" => {
                let path = self.operator.kernel_file.as_ref().ok_or_else(|| {
                    Error::Config("kernel operator needs kernel_file".into())
                })?;
                let doc = field_from_json(&std::fs::read_to_string(path)?)?;
                let m = lattice.cell_count();
                if doc.lattice() != &lattice || doc.n() != m {
                    return Err(Error::Config(
                        "kernel file does not match the lattice".into(),
                    ));
                }
                let matrix = DMatrix::from_fn(m, m, |x, y| doc.get(x)[y]);
                ModelOperator::kernel(lattice, matrix)
            }
            other => Err(Error::Config(format!("unknown operator kind '{other}'"))),
        }
    }
}

/// A single weight-spec file for the `constants` subcommand:
/// `{lattice, weight, exponents}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightSpecFile {
    pub lattice: LatticeConfig,
    pub weight: WeightSpec,
    pub exponents: Exponents,
}

impl WeightSpecFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }
}
