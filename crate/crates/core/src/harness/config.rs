use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::HarnessError;
use crate::agents::{AlgoKind, BcConfig, RunConfig, SacConfig};
use crate::autoencoder::AeConfig;
use crate::env::EnvConfig;
use crate::reward::RewardConfig;

/// Environment variable consulted when `run.output_dir` is unset.
pub const OUTPUT_DIR_VAR: &str = "DIPRL_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algo: AlgoKind,
    pub seed: u64,
    pub steps: u64,
    pub n_demos: usize,
    /// Seed for autoencoder pretraining and its diverse dataset.
    pub ae_seed: u64,
    /// Empty means: use `DIPRL_OUTPUT_DIR`, then `runs`.
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            algo: AlgoKind::DipRl,
            seed: 0,
            steps: 100_000,
            n_demos: 25,
            ae_seed: 0,
            output_dir: String::new(),
        }
    }
}

/// Every setting of an experiment, addressable by dotted keys such as
/// `env.grid_size` or `sac.gamma`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub ae: AeConfig,
    pub sac: SacConfig,
    pub reward: RewardConfig,
    pub bc: BcConfig,
    pub run: RunSection,
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Keys not mentioned
    /// keep their defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Sets one dotted key, parsing `value` according to the key's type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let slot = key
            .split('.')
            .try_fold(&mut tree, |node, part| node.get_mut(part))
            .filter(|v| !v.is_object())
            .ok_or_else(|| HarnessError::Config(format!("unknown key `{key}`")))?;
        let bad = || HarnessError::Config(format!("invalid value `{value}` for `{key}`"));
        *slot = match slot {
            Value::Number(n) if n.is_u64() => Value::from(value.parse::<u64>().map_err(|_| bad())?),
            Value::Number(_) => {
                let v: f64 = value.parse().map_err(|_| bad())?;
                serde_json::Number::from_f64(v).map(Value::Number).ok_or_else(bad)?
            }
            Value::Bool(_) => Value::Bool(value.parse().map_err(|_| bad())?),
            _ => Value::String(value.to_string()),
        };
        *self = serde_json::from_value(tree).map_err(|e| HarnessError::Config(format!("`{key}`: {e}")))?;
        Ok(())
    }

    /// Every key with its current value, in declaration order.
    pub fn entries(&self) -> Vec<(String, String)> {
        fn walk(prefix: &str, node: &Map<String, Value>, out: &mut Vec<(String, String)>) {
            for (k, v) in node {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match v {
                    Value::Object(m) => walk(&key, m, out),
                    Value::String(s) => out.push((key, s.clone())),
                    other => out.push((key, other.to_string())),
                }
            }
        }
        let tree = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        if let Value::Object(m) = tree {
            walk("", &m, &mut out);
        }
        out
    }

    /// The file form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        self.ae.validate(self.env.observation_len())?;
        self.sac.validate()?;
        if self.run.n_demos == 0 {
            return Err(HarnessError::Config("run.n_demos must be at least 1".into()));
        }
        let r = &self.reward;
        if r.segment_len == 0 || r.hidden == 0 || r.batch_size == 0 || r.round_interval == 0 || r.max_pairs == 0 {
            return Err(HarnessError::Config("reward sizes must be positive".into()));
        }
        if !(r.lr > 0.0 && r.weight_decay >= 0.0 && r.output_l2_coeff >= 0.0) {
            return Err(HarnessError::Config("reward lr must be positive and penalties non-negative".into()));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        if !self.run.output_dir.is_empty() {
            return PathBuf::from(&self.run.output_dir);
        }
        std::env::var_os(OUTPUT_DIR_VAR)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            algo: self.run.algo,
            seed: self.run.seed,
            steps: self.run.steps,
            env: self.env,
            sac: self.sac,
            reward: self.reward,
            bc: self.bc,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = ExperimentConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.run.n_demos, 25);
        assert_eq!(cfg.run.steps, 100_000);
        cfg.validate().unwrap();
    }

    #[test]
    fn dotted_keys_set_fields() {
        let cfg = ExperimentConfig::parse(
            "env.grid_size = 10\nsac.gamma = 0.9 # discount\nrun.algo = sqil\nae.penalty = latent\nsac.lr = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.env.grid_size, 10);
        assert_eq!(cfg.sac.gamma, 0.9);
        assert_eq!(cfg.sac.lr, 1.0);
        assert_eq!(cfg.run.algo, AlgoKind::Sqil);
        assert_eq!(cfg.ae.penalty, crate::autoencoder::PenaltyTarget::Latent);
    }

    #[test]
    fn bad_lines_are_reported() {
        let err = ExperimentConfig::parse("env.grid_size = 10\nsac.nope = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ExperimentConfig::parse("env.grid_size = -1").is_err());
        assert!(ExperimentConfig::parse("run.algo = ppo").is_err());
        assert!(ExperimentConfig::parse("env = 3").is_err());
        assert!(ExperimentConfig::parse("just words").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("reward.output_l2_coeff", "0.25").unwrap();
        cfg.set("run.output_dir", "out/dir").unwrap();
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.output_dir(), PathBuf::from("out/dir"));
    }
}
