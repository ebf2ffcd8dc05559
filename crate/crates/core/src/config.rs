//! Experiment configuration: one JSON document for every pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::EncoderSpec;
use crate::error::{Error, Result};
use crate::features::FbankConfig;
use crate::model::{Head, SluConfig};
use crate::nn::OptimizerKind;
use crate::shard::ShardPlan;
use crate::synth::SynthSpec;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub noise_snr_db: [f64; 2],
    pub rt60_s: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_snr_db: [5.0, 20.0],
            rt60_s: [0.2, 0.6],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let [s0, s1] = self.noise_snr_db;
        let [r0, r1] = self.rt60_s;
        if !(s0.is_finite() && s1.is_finite() && s0 <= s1) {
            return Err(Error::Config(format!("bad augment.noise_snr_db {s0}..{s1}")));
        }
        if !(r0 >= 0.1 && r0 <= r1 && r1 <= 0.6) {
            return Err(Error::Config(format!("bad augment.rt60_s {r0}..{r1}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub encoders: Vec<EncoderSpec>,
    pub lstm_layers: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub head: Head,
    pub attention_dim: Option<usize>,
    pub fbank: FbankConfig,
    pub mean_normalize: bool,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub gradient_clip_norm: f64,
    pub synth: SynthSpec,
    pub shards: ShardPlan,
    pub augment: AugmentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let m = SluConfig::default();
        let t = TrainConfig::default();
        Self {
            encoders: m.encoders,
            lstm_layers: m.lstm_layers,
            hidden: m.hidden,
            num_classes: m.num_classes,
            head: m.head,
            attention_dim: m.attention_dim,
            fbank: m.fbank,
            mean_normalize: m.mean_normalize,
            optimizer: t.optimizer,
            lr: t.lr,
            momentum: t.momentum,
            epochs: t.epochs,
            seed: t.seed,
            shuffle: t.shuffle,
            gradient_clip_norm: t.gradient_clip_norm,
            synth: SynthSpec::default(),
            shards: ShardPlan::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.slu().validate()?;
        self.train().validate()?;
        self.synth.validate()?;
        self.shards.validate()?;
        self.augment.validate()
    }

    pub fn slu(&self) -> SluConfig {
        SluConfig {
            encoders: self.encoders.clone(),
            lstm_layers: self.lstm_layers,
            hidden: self.hidden,
            num_classes: self.num_classes,
            head: self.head,
            attention_dim: self.attention_dim,
            fbank: self.fbank.clone(),
            mean_normalize: self.mean_normalize,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            lr: self.lr,
            momentum: self.momentum,
            epochs: self.epochs,
            seed: self.seed,
            shuffle: self.shuffle,
            gradient_clip_norm: self.gradient_clip_norm,
        }
    }
}
