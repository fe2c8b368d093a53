use serde::{Deserialize, Serialize};

use crate::sigcore::{HeaderSpec, DEFAULT_OVERSAMPLING};
use crate::{Error, Result};

/// One convolution stage of an encoder branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub channels: usize,
    pub kernel: usize,
    pub pool: usize,
}

/// Network shape, loss and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Samples per branch in each input waveform.
    pub input_len: usize,
    pub embedding_dim: usize,
    /// Encoder stages, shared by the I and Q branches. The decoder mirrors them.
    pub stages: Vec<ConvStage>,
    pub margin: f64,
    pub lambda_rec: f64,
    pub lambda_trip: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Leading epochs trained on reconstruction alone before the triplet
    /// term is switched on.
    pub pretrain_epochs: usize,
    pub init_seed: u64,
    pub batch_seed: u64,
}

pub const DEFAULT_CHANNELS: [usize; 3] = [16, 32, 64];
pub const DEFAULT_KERNEL: usize = 9;
pub const DEFAULT_POOL: usize = 4;

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::for_input_len(HeaderSpec::iridium(DEFAULT_OVERSAMPLING).waveform_len(), 128)
    }
}

fn flat_size(len: usize, stages: &[ConvStage]) -> usize {
    let last = stages.last().map_or(1, |s| s.channels);
    2 * last * pooled_len(len, stages)
}

fn pooled_len(len: usize, stages: &[ConvStage]) -> usize {
    stages.iter().fold(len, |l, s| l / s.pool.max(1))
}

impl ModelConfig {
    /// Default 16/32/64-channel stack for `input_len` samples, with one pool
    /// factor shared by all stages chosen so the flattened encoder output
    /// stays within `4*D ..= 64*D` when possible.
    pub fn for_input_len(input_len: usize, embedding_dim: usize) -> Self {
        let stages_with = |pool: usize| -> Vec<ConvStage> {
            DEFAULT_CHANNELS
                .iter()
                .map(|&channels| ConvStage { channels, kernel: DEFAULT_KERNEL, pool })
                .collect()
        };
        let (lo, hi) = (4 * embedding_dim, 64 * embedding_dim);
        let mut pool = DEFAULT_POOL;
        while flat_size(input_len, &stages_with(pool)) > hi {
            pool += 1;
        }
        while pool > 1 && flat_size(input_len, &stages_with(pool)) < lo {
            let smaller = flat_size(input_len, &stages_with(pool - 1));
            if smaller > hi {
                break;
            }
            pool -= 1;
        }
        ModelConfig {
            input_len,
            embedding_dim,
            stages: stages_with(pool),
            margin: 0.2,
            lambda_rec: 1.0,
            lambda_trip: 1.0,
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 20,
            pretrain_epochs: 0,
            init_seed: 0,
            batch_seed: 0,
        }
    }

    /// Length of each branch after the last pooling stage.
    pub fn pooled_len(&self) -> usize {
        pooled_len(self.input_len, &self.stages)
    }

    /// Width of the flattened encoder output feeding the dense layer.
    pub fn flat_size(&self) -> usize {
        flat_size(self.input_len, &self.stages)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be > 0, got {}", self.margin));
        }
        if self.embedding_dim < 2 {
            return bad(format!("embedding_dim must be >= 2, got {}", self.embedding_dim));
        }
        if self.stages.is_empty() {
            return bad("at least one conv stage is required".into());
        }
        for (k, s) in self.stages.iter().enumerate() {
            if s.channels == 0 || s.kernel == 0 || s.pool == 0 {
                return bad(format!("stage {k}: channels, kernel and pool must be >= 1"));
            }
        }
        if self.pooled_len() == 0 {
            return bad(format!(
                "input length {} pools down to 0 samples through {} stages",
                self.input_len,
                self.stages.len()
            ));
        }
        for (name, v) in [("lambda_rec", self.lambda_rec), ("lambda_trip", self.lambda_trip)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}
