//! Versioned JSON checkpoints. Networks are stored as layer shapes plus
//! row-major values and re-validated on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{AlgoKind, CriticPair, PolicyNetwork};
use crate::autoencoder::{AeConfig, Autoencoder};
use crate::env::EnvConfig;
use crate::nn::Mlp;
use crate::reward::{RewardConfig, RewardModel};

pub const CHECKPOINT_FORMAT: &str = "diprl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Autoencoder,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: CheckpointKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeCheckpoint {
    pub config: AeConfig,
    pub env: EnvConfig,
    pub frozen: bool,
    pub encoder: Mlp<f64>,
    pub decoder: Mlp<f64>,
}

impl AeCheckpoint {
    pub fn new(model: &Autoencoder<f64>, config: AeConfig, env: EnvConfig) -> Self {
        Self {
            config,
            env,
            frozen: model.is_frozen(),
            encoder: model.encoder().clone(),
            decoder: model.decoder().clone(),
        }
    }

    pub fn model(&self) -> Result<Autoencoder<f64>, HarnessError> {
        Ok(Autoencoder::from_parts(
            self.encoder.clone(),
            self.decoder.clone(),
            self.frozen,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticHeads {
    pub q1: Mlp<f64>,
    pub q2: Mlp<f64>,
    pub target1: Mlp<f64>,
    pub target2: Mlp<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardHead {
    pub config: RewardConfig,
    pub params: Mlp<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub algo: AlgoKind,
    pub seed: u64,
    pub env: EnvConfig,
    pub policy: Mlp<f64>,
    pub critics: Option<CriticHeads>,
    pub reward: Option<RewardHead>,
}

impl PolicyCheckpoint {
    pub fn new(
        algo: AlgoKind,
        seed: u64,
        env: EnvConfig,
        policy: &PolicyNetwork<f64>,
        critics: Option<&CriticPair<f64>>,
        reward: Option<&RewardModel<f64>>,
    ) -> Self {
        Self {
            algo,
            seed,
            env,
            policy: policy.params().clone(),
            critics: critics.map(|c| CriticHeads {
                q1: c.online().0.clone(),
                q2: c.online().1.clone(),
                target1: c.targets().0.clone(),
                target2: c.targets().1.clone(),
            }),
            reward: reward.map(|r| RewardHead {
                config: *r.config(),
                params: r.params().clone(),
            }),
        }
    }

    pub fn policy(&self) -> Result<PolicyNetwork<f64>, HarnessError> {
        Ok(PolicyNetwork::from_params(self.policy.clone())?)
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a, P> {
    #[serde(flatten)]
    header: Header,
    #[serde(flatten)]
    payload: &'a P,
}

fn save<P: Serialize>(kind: CheckpointKind, payload: &P, path: &Path) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let envelope = EnvelopeOut {
        header: Header {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind,
        },
        payload,
    };
    serde_json::to_writer(&mut out, &envelope).map_err(|source| HarnessError::Json {
        path: path.display().to_string(),
        source,
    })?;
    out.write_all(b"\n").map_err(io)?;
    out.flush().map_err(io)
}

fn load<P: DeserializeOwned>(kind: CheckpointKind, path: &Path) -> Result<P, HarnessError> {
    let file = File::open(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let json = |source| HarnessError::Json {
        path: path.display().to_string(),
        source,
    };
    // Check the header before interpreting the payload.
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(file)).map_err(json)?;
    let header: Header = serde_json::from_value(value.clone()).map_err(json)?;
    let bad = |msg: String| HarnessError::Checkpoint {
        path: path.display().to_string(),
        message: msg,
    };
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("not a checkpoint (format `{}`)", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    if header.kind != kind {
        return Err(bad(format!("expected a {kind:?} checkpoint, found {:?}", header.kind)));
    }
    serde_json::from_value(value).map_err(json)
}

pub fn save_autoencoder(ckpt: &AeCheckpoint, path: &Path) -> Result<(), HarnessError> {
    save(CheckpointKind::Autoencoder, ckpt, path)
}

pub fn load_autoencoder(path: &Path) -> Result<AeCheckpoint, HarnessError> {
    load(CheckpointKind::Autoencoder, path)
}

pub fn save_policy(ckpt: &PolicyCheckpoint, path: &Path) -> Result<(), HarnessError> {
    save(CheckpointKind::Policy, ckpt, path)
}

pub fn load_policy(path: &Path) -> Result<PolicyCheckpoint, HarnessError> {
    load(CheckpointKind::Policy, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn autoencoder_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = AeConfig {
            latent_dim: 4,
            hidden: 6,
            ..AeConfig::default()
        };
        let mut model = Autoencoder::<f64>::new(80, &cfg, &mut rng).unwrap();
        model.freeze();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae.json");
        save_autoencoder(&AeCheckpoint::new(&model, cfg, EnvConfig::default()), &path).unwrap();
        let back = load_autoencoder(&path).unwrap();
        assert!(back.frozen);
        let restored = back.model().unwrap();
        assert!(restored.encoder().bits_eq(model.encoder()));
        assert!(restored.decoder().bits_eq(model.decoder()));
        assert!(matches!(load_policy(&path), Err(HarnessError::Checkpoint { .. })));
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        std::fs::write(&path, r#"{"format":"other","version":1,"kind":"policy"}"#).unwrap();
        assert!(matches!(load_policy(&path), Err(HarnessError::Checkpoint { .. })));
        std::fs::write(&path, r#"{"format":"diprl-checkpoint","version":9,"kind":"policy"}"#).unwrap();
        let err = load_policy(&path).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
        assert!(matches!(load_policy(&dir.path().join("missing.json")), Err(HarnessError::Io { .. })));
    }
}
