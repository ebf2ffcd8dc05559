//! Training loop, checkpoints, evaluation and prediction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{decode_checkpoint, encode_checkpoint, CheckpointRecord};
use crate::audio::Waveform;
use crate::encoders::EncoderOutput;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics::ConfusionCounts;
use crate::model::{argmax, bytes_record, find, record_bytes, record_tensor, tensor_record, SluModel};
use crate::nn::{softmax_cross_entropy, Optimizer, OptimizerConfig, OptimizerKind, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// SGD momentum; ignored by Adam.
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub gradient_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            momentum: 0.0,
            epochs: 10,
            seed: 0,
            shuffle: true,
            gradient_clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.gradient_clip_norm > 0.0) {
            return Err(Error::Config("gradient_clip_norm must be > 0".into()));
        }
        Ok(())
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.lr, self.momentum),
            OptimizerKind::Adam => OptimizerConfig::adam(self.lr),
        }
    }
}

/// A labelled utterance as features.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub utt_id: String,
    pub features: FeatureMatrix,
    pub label: usize,
}

/// A labelled utterance after the frozen encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub utt_id: String,
    pub input: EncoderOutput,
    pub label: usize,
}

/// Runs the frozen encoders once per example.
pub fn encode_examples(model: &SluModel, examples: &[Example]) -> Result<Vec<EncodedExample>> {
    examples
        .iter()
        .map(|e| {
            Ok(EncodedExample {
                utt_id: e.utt_id.clone(),
                input: model.encode(&e.utt_id, &e.features)?,
                label: e.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    /// F1 of the predictions made during the epoch, before each update.
    pub train_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    model: SluModel,
    config: TrainConfig,
    optimizer: Optimizer,
    step: u64,
}

fn epoch_order(n: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
    }
    order
}

impl Trainer {
    pub fn new(model: SluModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Optimizer::new(config.optimizer_config());
        Ok(Self {
            model,
            config,
            optimizer,
            step: 0,
        })
    }

    pub fn model(&self) -> &SluModel {
        &self.model
    }

    pub fn into_model(self) -> SluModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed updates.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn fit(&mut self, data: &[EncodedExample], stop_at: Option<u64>) -> Result<Vec<EpochStats>> {
        self.fit_with(data, stop_at, |_| {})
    }

    /// Trains one utterance per step until `epochs · |data|` updates (or
    /// `stop_at`) have been made, resuming from the current step. The visit
    /// order of epoch `e` depends only on `(seed, e)`.
    pub fn fit_with(
        &mut self,
        data: &[EncodedExample],
        stop_at: Option<u64>,
        mut on_epoch: impl FnMut(&EpochStats),
    ) -> Result<Vec<EpochStats>> {
        if data.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        let c = self.model.config().num_classes;
        for class in 0..c.min(2) {
            if !data.iter().any(|e| e.label == class) {
                return Err(Error::invalid(format!("training set has no examples of class {class}")));
            }
        }
        if let Some(e) = data.iter().find(|e| e.label >= c) {
            return Err(Error::invalid(format!("{}: label {} >= num_classes {c}", e.utt_id, e.label)));
        }
        let n = data.len();
        let total = (self.config.epochs * n) as u64;
        let end = stop_at.map_or(total, |s| s.min(total));
        let mut history = Vec::new();
        let mut current: Option<(usize, Vec<usize>)> = None;
        let mut loss_sum = 0.0;
        let mut counts = ConfusionCounts::default();
        let mut steps_in_epoch = 0;

        let mut finish = |epoch: usize, steps: usize, loss_sum: f64, counts: ConfusionCounts| {
            let stats = EpochStats {
                epoch,
                steps,
                mean_loss: loss_sum / steps as f64,
                train_f1: counts.f1(),
            };
            on_epoch(&stats);
            history.push(stats);
        };

        while self.step < end {
            let epoch = (self.step / n as u64) as usize;
            let pos = (self.step % n as u64) as usize;
            if current.as_ref().map(|(e, _)| *e) != Some(epoch) {
                if let Some((prev, _)) = current.take() {
                    finish(prev, steps_in_epoch, loss_sum, counts);
                }
                current = Some((epoch, epoch_order(n, self.config.seed, epoch, self.config.shuffle)));
                loss_sum = 0.0;
                counts = ConfusionCounts::default();
                steps_in_epoch = 0;
            }
            let ex = &data[current.as_ref().unwrap().1[pos]];
            let pass = self.model.forward_encoded(&ex.input)?;
            let (loss, grad) = softmax_cross_entropy(&pass.scores, ex.label)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at step {}", self.step)));
            }
            counts.accumulate(pass.predicted(), ex.label);
            loss_sum += loss;
            steps_in_epoch += 1;
            self.model.backward(&pass, &grad)?;
            let params = self.model.params_mut();
            params.clip_grad_norm(self.config.gradient_clip_norm);
            self.optimizer
                .step(params)
                .map_err(|e| Error::Numeric(format!("step {}: {e}", self.step)))?;
            params.round_to_f32();
            self.step += 1;
        }
        if let Some((epoch, _)) = current {
            finish(epoch, steps_in_epoch, loss_sum, counts);
        }
        Ok(history)
    }

    pub fn to_records(&self) -> Result<Vec<CheckpointRecord>> {
        let mut records = self.model.to_records()?;
        let train = serde_json::to_vec(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        records.push(bytes_record("meta/train", &train));
        records.push(u64_record("meta/step", self.step));
        records.push(u64_record("opt/steps", self.optimizer.steps));
        for p in self.model.params().iter() {
            for (k, s) in p.state.iter().enumerate() {
                records.push(tensor_record(&format!("opt/{}/{k}", p.name), s));
            }
        }
        Ok(records)
    }

    pub fn from_records(records: &[CheckpointRecord]) -> Result<Self> {
        let mut model = SluModel::from_records(records)?;
        let config: TrainConfig = serde_json::from_slice(&record_bytes(find(records, "meta/train")?)?)
            .map_err(|e| Error::Config(format!("checkpoint train config: {e}")))?;
        let step = record_u64(find(records, "meta/step")?)?;
        let mut trainer_opt = Optimizer::new(config.optimizer_config());
        trainer_opt.steps = record_u64(find(records, "opt/steps")?)?;
        for p in model.params_mut().iter_mut() {
            let prefix = format!("opt/{}/", p.name);
            let mut slots: Vec<(usize, Tensor)> = Vec::new();
            for r in records.iter().filter(|r| r.name.starts_with(&prefix)) {
                let k: usize = r.name[prefix.len()..]
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad optimizer record {}", r.name)))?;
                slots.push((k, record_tensor(r)?));
            }
            slots.sort_by_key(|(k, _)| *k);
            p.state = slots.into_iter().map(|(_, t)| t).collect();
        }
        config.validate()?;
        Ok(Self {
            model,
            config,
            optimizer: trainer_opt,
            step,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_checkpoint(&self.to_records()?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_records(&decode_checkpoint(&bytes, path)?)
    }
}

fn u64_record(name: &str, v: u64) -> CheckpointRecord {
    // two 24-bit halves keep every value exact in f32
    CheckpointRecord {
        name: name.to_string(),
        shape: vec![2],
        data: vec![(v >> 24) as f32, (v & 0xFF_FFFF) as f32],
    }
}

fn record_u64(r: &CheckpointRecord) -> Result<u64> {
    match r.data.as_slice() {
        [hi, lo] if *hi >= 0.0 && *lo >= 0.0 && *hi < 16_777_216.0 => Ok(((*hi as u64) << 24) | *lo as u64),
        _ => Err(Error::invalid(format!("record {} is not a counter", r.name))),
    }
}

/// Confusion counts of argmax predictions over `data`.
pub fn evaluate(model: &SluModel, data: &[EncodedExample]) -> Result<ConfusionCounts> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut counts = ConfusionCounts::default();
    for ex in data {
        counts.accumulate(model.forward_encoded(&ex.input)?.predicted(), ex.label);
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
    /// Max-pool head: time of the winning step of the predicted class.
    pub event_time_s: Option<f64>,
}

pub fn predict_encoded(model: &SluModel, input: &EncoderOutput) -> Result<Prediction> {
    let pass = model.forward_encoded(input)?;
    let label = argmax(&pass.scores);
    let shift_s = model.config().fbank.frame_shift_ms / 1000.0;
    let event_time_s = pass
        .argmax()
        .map(|idx| idx[label] as f64 * pass.stride as f64 * shift_s);
    Ok(Prediction {
        label,
        scores: pass.scores,
        event_time_s,
    })
}

pub fn predict(model: &SluModel, utt_id: &str, w: &Waveform) -> Result<Prediction> {
    let features = model.features(w)?;
    predict_encoded(model, &model.encode(utt_id, &features)?)
}
