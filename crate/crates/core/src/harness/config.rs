use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::AgentSpec;
use crate::recognition::StrategyConfig;
use crate::types::Condition;
use crate::wiring::{ChannelTransform, RebindGate};

/// How many trials run at once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    /// One trial after another on the calling thread.
    Sequential,
    /// A thread pool sized to the machine.
    #[default]
    Auto,
    /// A thread pool with this many workers.
    Threads(usize),
}

fn default_conditions() -> Vec<Condition> {
    Condition::CLASSIFIABLE.to_vec()
}

fn default_budget() -> u32 {
    30
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment, as read from a TOML file. Key names are documented in
/// `docs/config.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials_per_condition: u32,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<Condition>,
    pub subject: AgentSpec,
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub other_pool: Vec<AgentSpec>,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub parallelism: Parallelism,
    #[serde(default)]
    pub channel: ChannelTransform,
    #[serde(default)]
    pub rebind_gate: RebindGate,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `output_dir` is kept relative to the
    /// working directory, not to the file.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.trials_per_condition < 1 {
            return bad("trials_per_condition must be at least 1".into());
        }
        if self.conditions.is_empty() {
            return bad("conditions must not be empty".into());
        }
        if let Some(c) = self.conditions.iter().find(|c| c.expected_verdict().is_none()) {
            return bad(format!("condition {c} cannot be scored; only other, mimicker and mirror can"));
        }
        let mut seen = self.conditions.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.conditions.len() {
            return bad("conditions contain duplicates".into());
        }
        if self.conditions.contains(&Condition::Other) && self.other_pool.is_empty() {
            return bad("other is among the conditions but other_pool is empty".into());
        }
        if self.budget < 2 {
            return bad(format!("budget must be at least 2, got {}", self.budget));
        }
        self.strategy.validate().map_err(HarnessError::Config)?;
        if self.strategy.max_turns > self.budget {
            return bad(format!(
                "strategy.max_turns ({}) exceeds budget ({})",
                self.strategy.max_turns, self.budget
            ));
        }
        if let ChannelTransform::TokenNoise { rate } = self.channel {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("channel noise rate must lie in [0, 1], got {rate}"));
            }
        }
        if let Parallelism::Threads(0) = self.parallelism {
            return bad("parallelism threads must be positive".into());
        }
        Ok(())
    }
}
