//! JSON checkpoints for chips, dense baselines and reference models.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline_bp::{dense_forward, DenseMLP};
use crate::photonic_mesh::ChipInstance;
use crate::pinn::{FDConfig, PDEProblem, ScalarNet};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum CheckpointModel {
    Chip(ChipInstance),
    DenseMlp(DenseMLP),
    /// `f ≡ value`; `value = 1` is the exact solution of the toy problems.
    Constant {
        value: f64,
    },
}

impl ScalarNet for CheckpointModel {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            CheckpointModel::Chip(chip) => chip.eval(x, t),
            CheckpointModel::DenseMlp(mlp) => dense_forward(mlp, x, t),
            CheckpointModel::Constant { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerState {
    pub epoch: usize,
    pub learning_rate: f64,
    pub cum_inferences: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub problem: PDEProblem,
    #[serde(default)]
    pub fd: FDConfig,
    pub model: CheckpointModel,
    #[serde(default)]
    pub optimizer: Option<OptimizerState>,
    /// Validation MSE recorded when the checkpoint was written.
    #[serde(default)]
    pub val_mse: Option<f64>,
}

impl Checkpoint {
    pub fn new(problem: PDEProblem, model: CheckpointModel) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem,
            fd: FDConfig::default(),
            model,
            optimizer: None,
            val_mse: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.schema_version != SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                ck.schema_version
            )));
        }
        Ok(ck)
    }

    /// Write atomically via a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
