use serde::{Deserialize, Serialize};

use crate::corpus::NUM_SPECIALS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    EncoderDecoder,
    DecoderOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub vocab_size: usize,
    #[serde(default = "ModelConfig::default_d_model")]
    pub d_model: usize,
    #[serde(default = "ModelConfig::default_n_layers")]
    pub n_layers: usize,
    #[serde(default = "ModelConfig::default_n_heads")]
    pub n_heads: usize,
    #[serde(default = "ModelConfig::default_ffn_dim")]
    pub ffn_dim: usize,
    #[serde(default = "ModelConfig::default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    fn default_d_model() -> usize {
        64
    }
    fn default_n_layers() -> usize {
        2
    }
    fn default_n_heads() -> usize {
        2
    }
    fn default_ffn_dim() -> usize {
        128
    }
    fn default_max_len() -> usize {
        128
    }

    pub fn new(mode: Mode, vocab_size: usize) -> Self {
        Self {
            mode,
            vocab_size,
            d_model: Self::default_d_model(),
            n_layers: Self::default_n_layers(),
            n_heads: Self::default_n_heads(),
            ffn_dim: Self::default_ffn_dim(),
            max_len: Self::default_max_len(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < NUM_SPECIALS + 1 {
            return fail(format!(
                "vocab_size {} leaves no room for words",
                self.vocab_size
            ));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 || self.ffn_dim == 0 {
            return fail("n_layers and ffn_dim must be positive".into());
        }
        if self.max_len < 4 {
            return fail(format!("max_len {} is below 4", self.max_len));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    #[serde(default = "SamplerConfig::default_top_p")]
    pub top_p: f64,
    #[serde(default = "SamplerConfig::default_temperature")]
    pub temperature: f64,
    #[serde(default = "SamplerConfig::default_max_new_tokens")]
    pub max_new_tokens: usize,
}

impl SamplerConfig {
    fn default_top_p() -> f64 {
        0.95
    }
    fn default_temperature() -> f64 {
        1.0
    }
    fn default_max_new_tokens() -> usize {
        128
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            top_p: Self::default_top_p(),
            temperature: Self::default_temperature(),
            max_new_tokens: Self::default_max_new_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "TrainConfig::default_steps")]
    pub steps: usize,
    #[serde(default = "TrainConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "TrainConfig::default_peak_lr")]
    pub peak_lr: f64,
    #[serde(default = "TrainConfig::default_warmup")]
    pub warmup: usize,
    #[serde(default = "TrainConfig::default_weight_decay")]
    pub weight_decay: f64,
    /// Per-example L2 clip norm; `None` (JSON null) disables clipping.
    #[serde(default = "TrainConfig::default_clip")]
    pub clip: Option<f64>,
    #[serde(default)]
    pub noise_multiplier: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    fn default_steps() -> usize {
        500
    }
    fn default_batch_size() -> usize {
        64
    }
    fn default_peak_lr() -> f64 {
        1e-3
    }
    fn default_warmup() -> usize {
        100
    }
    fn default_weight_decay() -> f64 {
        0.1
    }
    fn default_clip() -> Option<f64> {
        Some(1.0)
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip.unwrap_or(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "steps and batch_size must be positive".into(),
            ));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!(
                "peak_lr {} must be positive",
                self.peak_lr
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip {c} must be positive")));
            }
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::Config(
                "noise_multiplier must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: Self::default_steps(),
            batch_size: Self::default_batch_size(),
            peak_lr: Self::default_peak_lr(),
            warmup: Self::default_warmup(),
            weight_decay: Self::default_weight_decay(),
            clip: Self::default_clip(),
            noise_multiplier: 0.0,
            seed: 0,
        }
    }
}
