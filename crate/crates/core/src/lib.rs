//! Reward learning from demonstration-inferred preferences.
//!
//! Demonstration segments are automatically preferred over agent segments;
//! a Bradley-Terry reward model is fit to those comparisons and optimized by
//! a discrete soft actor-critic whose batches mix demonstrations with agent
//! experience. The crate also ships the baselines (SQIL, behavioral cloning,
//! true-reward SAC), a deterministic chop-grid benchmark with a scripted
//! expert, and the experiment harness behind the `diprl` CLI.
//!
//! Learning code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which every default path uses.

pub mod agents;
pub mod autoencoder;
pub mod data;
pub mod env;
pub mod harness;
pub mod nn;
pub mod reward;
mod scalar;

pub use scalar::{log_sigmoid, log_softmax, sigmoid, softmax, Scalar};

pub type Mlp = nn::Mlp<f64>;
pub type GradBuffer = nn::GradBuffer<f64>;
pub type AdamState = nn::AdamState<f64>;
pub type Autoencoder = autoencoder::Autoencoder<f64>;
pub type RewardModel = reward::RewardModel<f64>;
pub type PolicyNetwork = agents::PolicyNetwork<f64>;
pub type CriticPair = agents::CriticPair<f64>;
pub type Embedded = agents::Embedded<f64>;
