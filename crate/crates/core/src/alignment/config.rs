use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RewardConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Exit,
    Dpo,
    Remax,
    Rloo,
    Grpo,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Exit, Algo::Dpo, Algo::Remax, Algo::Rloo, Algo::Grpo];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Exit => "exit",
            Algo::Dpo => "dpo",
            Algo::Remax => "remax",
            Algo::Rloo => "rloo",
            Algo::Grpo => "grpo",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn is_online(self) -> bool {
        matches!(self, Algo::Remax | Algo::Rloo | Algo::Grpo)
    }
}

/// Plain teacher-forced training (pretraining and SFT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisedConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self { epochs: 1, batch_size: 32, lr: 1e-4, clip_norm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitConfig {
    pub rounds: usize,
    pub samples: usize,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
}

impl Default for ExitConfig {
    fn default() -> Self {
        Self { rounds: 2, samples: 8, temperature: 1.0, epochs: 1, batch_size: 64, lr: 1e-6, clip_norm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpoConfig {
    pub rounds: usize,
    pub samples: usize,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub sft_weight: f64,
    pub label_smoothing: f64,
    /// Rejected sequences must constrain fewer than this fraction of curves.
    pub rejected_max_fc_curves: f64,
    pub clip_norm: Option<f64>,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self {
            rounds: 2,
            samples: 8,
            temperature: 1.0,
            epochs: 1,
            batch_size: 64,
            lr: 1e-5,
            beta: 0.1,
            sft_weight: 0.05,
            label_smoothing: 0.3,
            rejected_max_fc_curves: 0.9,
            clip_norm: None,
        }
    }
}

/// Online RL (ReMax, RLOO, GRPO). `batch_size` counts trajectories; group
/// methods draw `batch_size / group_size` queries per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub group_size: usize,
    pub lr: f64,
    pub temperature: f64,
    /// Weight of the summed per-token KL inside the reward. `None` uses 0.01
    /// for ReMax and RLOO and 0 for GRPO.
    pub kl_coef: Option<f64>,
    pub grpo_eps: f64,
    pub grpo_beta: f64,
    pub ref_update_every: usize,
    pub constraintwise: bool,
    pub clip_norm: Option<f64>,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            group_size: 8,
            lr: 1e-5,
            temperature: 1.0,
            kl_coef: None,
            grpo_eps: 0.2,
            grpo_beta: 0.01,
            ref_update_every: 100,
            constraintwise: true,
            clip_norm: None,
        }
    }
}

impl RlConfig {
    pub fn kl_coef_for(&self, algo: Algo) -> f64 {
        self.kl_coef.unwrap_or(if algo == Algo::Grpo { 0.0 } else { 0.01 })
    }

    pub fn queries_per_step(&self, algo: Algo) -> usize {
        match algo {
            Algo::Rloo | Algo::Grpo => (self.batch_size / self.group_size.max(1)).max(1),
            _ => self.batch_size.max(1),
        }
    }
}

/// Every tunable of the training pipeline, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub model: PolicyConfig,
    pub pretrain: SupervisedConfig,
    pub sft: SupervisedConfig,
    pub exit: ExitConfig,
    pub dpo: DpoConfig,
    pub rl: RlConfig,
    pub reward: RewardConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: PolicyConfig::default(),
            pretrain: SupervisedConfig { epochs: 1, batch_size: 64, lr: 1e-4, clip_norm: None },
            sft: SupervisedConfig { epochs: 1, batch_size: 64, lr: 1e-5, clip_norm: None },
            exit: ExitConfig::default(),
            dpo: DpoConfig::default(),
            rl: RlConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
