//! Experiment config file (UTF-8 JSON).
//!
//! Keys: `graph` (path to a graph file), `policy` (one name or a list),
//! `policy_params` (flat params applied to every policy, or a map keyed by
//! policy name), `batch_size`, `n_batches`, `n_reps`, `master_seed`, `env`
//! (`{"type": "synthetic", ...}` or `{"type": "replay", "log": path}`),
//! and `record_timing`.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::policies::{PolicyName, PolicyParams};
use crate::sim::runner::RunSettings;

pub const DEFAULT_P_LO: f64 = 0.01;
pub const DEFAULT_P_HI: f64 = 0.30;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Path to the graph file, relative to the config file's directory.
    pub graph: String,
    pub policy: PolicyList,
    #[serde(default)]
    pub policy_params: serde_json::Value,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub n_batches: usize,
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    /// Falls back to the AES_SEED environment variable, then to 0.
    #[serde(default)]
    pub master_seed: Option<u64>,
    pub env: EnvSpec,
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

fn default_batch_size() -> usize {
    1000
}

fn default_n_reps() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PolicyList {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Synthetic {
        #[serde(default = "default_p_lo")]
        p_lo: f64,
        #[serde(default = "default_p_hi")]
        p_hi: f64,
        /// Environment generation seed; defaults to the master seed.
        #[serde(default)]
        seed: Option<u64>,
        /// Draw a fresh environment per repetition instead of fixing one
        /// across the comparison.
        #[serde(default)]
        resample_per_rep: bool,
    },
    Replay {
        /// Path to the replay log, relative to the config file's directory.
        log: String,
    },
}

fn default_p_lo() -> f64 {
    DEFAULT_P_LO
}

fn default_p_hi() -> f64 {
    DEFAULT_P_HI
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.n_reps < 1 {
            return Err(Error::InvalidConfig("n_reps must be >= 1".into()));
        }
        self.policies()?;
        if let EnvSpec::Synthetic { p_lo, p_hi, .. } = &self.env {
            if !(0.0 < *p_lo && p_lo < p_hi && *p_hi < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "need 0 < p_lo < p_hi < 1, got [{p_lo}, {p_hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn policies(&self) -> Result<Vec<PolicyName>> {
        let names: Vec<&str> = match &self.policy {
            PolicyList::One(s) => vec![s.as_str()],
            PolicyList::Many(v) => v.iter().map(String::as_str).collect(),
        };
        if names.is_empty() {
            return Err(Error::InvalidConfig("no policy named".into()));
        }
        names.iter().map(|s| s.parse()).collect()
    }

    /// Hyperparameters for one policy. `policy_params` may be a flat object
    /// applied to every policy, or an object keyed by policy name.
    pub fn params_for(&self, name: PolicyName) -> Result<PolicyParams> {
        match &self.policy_params {
            serde_json::Value::Null => Ok(PolicyParams::default()),
            serde_json::Value::Object(map) => {
                let keyed_by_policy = !map.is_empty()
                    && map.keys().all(|k| k.parse::<PolicyName>().is_ok());
                if keyed_by_policy {
                    match map.get(name.as_str()) {
                        None => Ok(PolicyParams::default()),
                        Some(v) => Ok(serde_json::from_value(v.clone())?),
                    }
                } else {
                    Ok(serde_json::from_value(self.policy_params.clone())?)
                }
            }
            _ => Err(Error::InvalidConfig(
                "policy_params must be an object".into(),
            )),
        }
    }

    pub fn all_params(&self) -> Result<HashMap<PolicyName, PolicyParams>> {
        self.policies()?
            .into_iter()
            .map(|p| Ok((p, self.params_for(p)?)))
            .collect()
    }

    pub fn run_settings(&self, master_seed: u64) -> RunSettings {
        RunSettings {
            batch_size: self.batch_size,
            n_batches: self.n_batches,
            n_reps: self.n_reps,
            master_seed,
            record_timing: self.record_timing,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "graph": "graph.json",
        "policy": ["aes", "egreedy"],
        "policy_params": {"aes": {"sigma": 0.5}},
        "batch_size": 1000,
        "n_batches": 10,
        "n_reps": 4,
        "master_seed": 7,
        "env": {"type": "synthetic", "p_lo": 0.01, "p_hi": 0.3}
    }"#;

    #[test]
    fn parses_policy_list_and_per_policy_params() {
        let cfg = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(
            cfg.policies().unwrap(),
            vec![PolicyName::Aes, PolicyName::Egreedy]
        );
        assert_eq!(cfg.params_for(PolicyName::Aes).unwrap().sigma, 0.5);
        assert_eq!(cfg.params_for(PolicyName::Egreedy).unwrap().epsilon, 0.1);
    }

    #[test]
    fn single_policy_with_flat_params() {
        let text = r#"{
            "graph": "g.json",
            "policy": "egreedy",
            "policy_params": {"epsilon": 0.25},
            "n_batches": 1,
            "env": {"type": "synthetic"}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.params_for(PolicyName::Egreedy).unwrap().epsilon, 0.25);
        assert_eq!(cfg.batch_size, 1000);
        assert_eq!(cfg.n_reps, 20);
    }

    #[test]
    fn unknown_policy_rejected() {
        let text = r#"{
            "graph": "g.json",
            "policy": "nonsense",
            "n_batches": 1,
            "env": {"type": "synthetic"}
        }"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = r#"{
            "graph": "g.json",
            "policy": "aes",
            "n_batches": 1,
            "env": {"type": "synthetic"},
            "surprise": true
        }"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn unknown_param_key_rejected() {
        let text = r#"{
            "graph": "g.json",
            "policy": "aes",
            "policy_params": {"sigmah": 2.0},
            "n_batches": 1,
            "env": {"type": "synthetic"}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!(cfg.params_for(PolicyName::Aes).is_err());
    }

    #[test]
    fn replay_env_parses() {
        let text = r#"{
            "graph": "g.json",
            "policy": "ucb",
            "n_batches": 1,
            "env": {"type": "replay", "log": "logs.csv"}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(cfg.env, EnvSpec::Replay { .. }));
    }

    #[test]
    fn bad_band_rejected() {
        let text = r#"{
            "graph": "g.json",
            "policy": "aes",
            "n_batches": 1,
            "env": {"type": "synthetic", "p_lo": 0.5, "p_hi": 0.2}
        }"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }
}
