//! Run configuration: one strict JSON document per run.

use std::fmt;
use std::path::{Path, PathBuf};

use photon_pinn::cost_model::{Accounting, ArchKind, DeviceConstants, TrainingBudget};
use photon_pinn::photonic_mesh::NoiseConfig;
use photon_pinn::pinn::{FDConfig, PDEProblem};
use photon_pinn::tensor_train::TTShape;
use photon_pinn::zo_trainer::{NetworkSpec, SPSAConfig, Seeds, StepDecay, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    OnnDense,
    Tonn,
}

impl Arch {
    /// Hardware row of the cost model this architecture is charged against.
    pub fn cost_kind(self) -> ArchKind {
        match self {
            Arch::OnnDense => ArchKind::Onn,
            Arch::Tonn => ArchKind::Tonn1,
        }
    }
}

/// `"hjb20"` or `"hjb-toy(D)"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProblemSel {
    Hjb20,
    HjbToy(usize),
}

impl ProblemSel {
    pub fn problem(self) -> PDEProblem {
        match self {
            ProblemSel::Hjb20 => PDEProblem::hjb20(),
            ProblemSel::HjbToy(d) => PDEProblem::hjb_toy(d),
        }
    }
}

impl fmt::Display for ProblemSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSel::Hjb20 => write!(f, "hjb20"),
            ProblemSel::HjbToy(d) => write!(f, "hjb-toy({d})"),
        }
    }
}

impl From<ProblemSel> for String {
    fn from(p: ProblemSel) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for ProblemSel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        if s == "hjb20" {
            return Ok(ProblemSel::Hjb20);
        }
        let dim = s
            .strip_prefix("hjb-toy(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|d| d.trim().parse::<usize>().ok())
            .filter(|&d| d >= 1);
        dim.map(ProblemSel::HjbToy)
            .ok_or_else(|| format!("unknown problem {s:?}; expected \"hjb20\" or \"hjb-toy(D)\" with D >= 1"))
    }
}

fn default_batch() -> usize {
    100
}

fn default_lr() -> f64 {
    1e-3
}

fn default_val_every() -> usize {
    50
}

fn default_n_val() -> usize {
    1000
}

fn default_max_retries() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub arch: Arch,
    pub problem: ProblemSel,
    /// TT shape of both hidden layers (`tonn`); defaults to the 1024-wide shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tt: Option<TTShape>,
    /// Hidden width (`onn-dense`); defaults to 1024.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_decay: Option<StepDecay>,
    #[serde(default)]
    pub spsa: SPSAConfig,
    #[serde(default)]
    pub fd: FDConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_val_every")]
    pub val_every: usize,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
    #[serde(default)]
    pub accounting: Accounting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Epoch interval between checkpoints; defaults to `val_every`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(default)]
    pub device: DeviceConstants,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.train_config()?;
        cfg.device.validate().map_err(|e| format!("device: {e}"))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn network(&self) -> Result<NetworkSpec, String> {
        match self.arch {
            Arch::Tonn => {
                if self.hidden.is_some() {
                    return Err("field `hidden` applies to arch \"onn-dense\"; use `tt` for \"tonn\"".into());
                }
                Ok(NetworkSpec::Tonn {
                    tt: self.tt.clone().unwrap_or_else(TTShape::hjb20_1024),
                })
            }
            Arch::OnnDense => {
                if self.tt.is_some() {
                    return Err("field `tt` applies to arch \"tonn\"; use `hidden` for \"onn-dense\"".into());
                }
                Ok(NetworkSpec::OnnDense {
                    hidden: self.hidden.unwrap_or(1024),
                })
            }
        }
    }

    /// The validated trainer configuration.
    pub fn train_config(&self) -> Result<TrainConfig, String> {
        let cfg = TrainConfig {
            problem: self.problem.problem(),
            network: self.network()?,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            spsa: self.spsa,
            fd: self.fd,
            noise: self.noise,
            seeds: self.seeds,
            val_every: self.val_every,
            n_val: self.n_val,
            max_retries: self.max_retries,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        if self.checkpoint_every == Some(0) {
            return Err("checkpoint_every must be >= 1".into());
        }
        Ok(cfg)
    }

    pub fn checkpoint_every(&self) -> usize {
        self.checkpoint_every.unwrap_or(self.val_every)
    }

    /// Per-epoch hardware budget under the configured accounting mode.
    pub fn budget(&self) -> TrainingBudget {
        TrainingBudget::for_run(
            self.problem.problem().dim,
            self.batch_size,
            self.spsa.num_perturbations,
            self.epochs,
            self.accounting,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{"arch": "tonn", "problem": "hjb-toy(2)", "epochs": 5,
        "tt": {"out_factors": [8, 8], "in_factors": [8, 8], "ranks": [1, 2, 1]}}"#;

    #[test]
    fn round_trips_losslessly() {
        let cfg = RunConfig::from_json(TOY).unwrap();
        assert_eq!(cfg.problem, ProblemSel::HjbToy(2));
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_json(r#"{"arch": "tonn", "problem": "hjb20", "epochs": 1, "colour": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"arch": "gpu", "problem": "hjb20", "epochs": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"arch": "tonn", "problem": "hjb-toy(0)", "epochs": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"arch": "tonn", "problem": "hjb20", "epochs": 1, "hidden": 4}"#).is_err());
        let err = RunConfig::from_json("{\"arch\": \"tonn\",\n \"problem\": 3}").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn hjb20_defaults() {
        let cfg = RunConfig::from_json(r#"{"arch": "tonn", "problem": "hjb20", "epochs": 5000}"#).unwrap();
        let t = cfg.train_config().unwrap();
        assert_eq!(t.network.weight_count(&t.problem), 1536);
        assert_eq!(t.inferences_per_epoch(), 46_200);
        let b = cfg.budget();
        assert_eq!(b.inferences_per_loss * b.loss_evals_per_step * b.batch, 42_000);
    }
}
