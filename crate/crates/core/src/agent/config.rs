use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::FitParams;

/// Which block sits between the PreDNN and the PostDNN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Shot-sampled quantum layer with a qtDNN surrogate for backprop.
    Pqc,
    /// Trainable dense layer of the surrogate's width.
    Fc,
    /// Fair random bits.
    Rbg,
    /// Constant zero vector.
    #[serde(alias = "0l")]
    Zero,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Pqc, Variant::Fc, Variant::Rbg, Variant::Zero];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pqc => "pqc",
            Variant::Fc => "fc",
            Variant::Rbg => "rbg",
            Variant::Zero => "zero",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pqc" => Ok(Variant::Pqc),
            "fc" => Ok(Variant::Fc),
            "rbg" => Ok(Variant::Rbg),
            "zero" | "0l" => Ok(Variant::Zero),
            other => Err(Error::Config(format!("unknown middle-block variant `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Critic updates per actor update (N_A).
    pub actor_update_interval: usize,
    /// Exploration noise std as a fraction of each action half-range.
    pub exploration_noise: f64,
    /// Target-policy smoothing std as a fraction of each action range.
    pub target_noise: f64,
    /// Smoothing clip as a fraction of each action range.
    pub target_noise_clip: f64,
    pub warmup_steps: usize,
    /// Hidden width of PreDNN, PostDNN and both critic blocks.
    pub hidden_width: usize,
    pub clink_dim: usize,
    pub replay_capacity: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 5e-3,
            lr: 3e-4,
            batch_size: 256,
            actor_update_interval: 2,
            exploration_noise: 5e-2,
            target_noise: 0.1,
            target_noise_clip: 0.25,
            warmup_steps: 1000,
            hidden_width: 256,
            clink_dim: 10,
            replay_capacity: 1_000_000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("agent.gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("agent.tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("agent.lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("agent.batch_size must be positive".into());
        }
        if self.actor_update_interval == 0 {
            return fail("agent.actor_update_interval must be at least 1".into());
        }
        for (name, v) in [
            ("exploration_noise", self.exploration_noise),
            ("target_noise", self.target_noise),
            ("target_noise_clip", self.target_noise_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("agent.{name} must be non-negative, got {v}"));
            }
        }
        if self.hidden_width == 0 {
            return fail("agent.hidden_width must be positive".into());
        }
        if self.replay_capacity < self.batch_size {
            return fail("agent.replay_capacity must hold at least one batch".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    /// qtDNN hidden width (L_h); also the FC middle block's width.
    pub hidden_width: usize,
    pub tiny_batches: usize,
    pub tiny_batch_size: usize,
    pub buffer_capacity: usize,
    pub buffer_mix: f64,
    pub lr: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden_width: 2048,
            tiny_batches: 32,
            tiny_batch_size: 64,
            buffer_capacity: 10_000,
            buffer_mix: 0.5,
            lr: 3e-4,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.hidden_width == 0 {
            return fail("surrogate.hidden_width must be positive");
        }
        if self.tiny_batch_size == 0 {
            return fail("surrogate.tiny_batch_size must be positive");
        }
        if self.buffer_capacity == 0 {
            return fail("surrogate.buffer_capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.buffer_mix) {
            return fail("surrogate.buffer_mix must be in [0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("surrogate.lr must be positive");
        }
        Ok(())
    }

    pub fn fit_params(&self) -> FitParams {
        FitParams {
            tiny_batches: self.tiny_batches,
            tiny_batch_size: self.tiny_batch_size,
            buffer_mix: self.buffer_mix,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AgentConfig::default().validate().unwrap();
        SurrogateConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_values_rejected() {
        for cfg in [
            AgentConfig { gamma: 1.0, ..Default::default() },
            AgentConfig { tau: 0.0, ..Default::default() },
            AgentConfig { actor_update_interval: 0, ..Default::default() },
            AgentConfig { exploration_noise: -0.1, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        let s = SurrogateConfig { buffer_mix: 1.5, ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert_eq!("0L".parse::<Variant>().unwrap(), Variant::Zero);
    }
}
