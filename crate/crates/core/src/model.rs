//! The intent classifier: frozen encoder ensemble, stacked biLSTM, per-step
//! linear layer and a temporal pooling head.

use serde::{Deserialize, Serialize};

use crate::archive::CheckpointRecord;
use crate::audio::Waveform;
use crate::encoders::{align_and_concat, EncoderOutput, EncoderSpec, FrozenEncoder};
use crate::error::{Error, Result};
use crate::features::{fbank, mean_normalize, FbankConfig, FeatureMatrix};
use crate::nn::init::{named_rng, uniform};
use crate::nn::{
    attention_pool, attention_pool_backward, bilstm, bilstm_backward, linear, linear_backward,
    max_pool_time, max_pool_time_backward, AttentionOutput, AttentionParams, AttentionWeights,
    BiLstmCache, LstmLayerParams, LstmWeights, MaxPoolOutput, ParameterSet, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    #[default]
    Maxpool,
    Attention,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Maxpool => "maxpool",
            Head::Attention => "attention",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SluConfig {
    pub encoders: Vec<EncoderSpec>,
    pub lstm_layers: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub head: Head,
    /// Width of the attention scoring layer; `hidden` when absent.
    pub attention_dim: Option<usize>,
    pub fbank: FbankConfig,
    pub mean_normalize: bool,
}

impl Default for SluConfig {
    fn default() -> Self {
        Self {
            encoders: vec![
                EncoderSpec::projection("a", 1024, 1, 1),
                EncoderSpec::projection("b", 256, 1, 2),
            ],
            lstm_layers: 2,
            hidden: 256,
            num_classes: 2,
            head: Head::Maxpool,
            attention_dim: None,
            fbank: FbankConfig::default(),
            mean_normalize: true,
        }
    }
}

impl SluConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoders.is_empty() {
            return Err(Error::Config("at least one encoder is required".into()));
        }
        for (i, e) in self.encoders.iter().enumerate() {
            e.validate()?;
            if self.encoders[..i].iter().any(|o| o.id == e.id) {
                return Err(Error::Config(format!("duplicate encoder id {}", e.id)));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.hidden == 0 || self.lstm_layers == 0 {
            return Err(Error::Config("hidden and lstm_layers must be >= 1".into()));
        }
        if self.attention_dim == Some(0) {
            return Err(Error::Config("attention_dim must be >= 1".into()));
        }
        self.fbank.validate()
    }

    pub fn ensemble_dim(&self) -> usize {
        self.encoders.iter().map(|e| e.output_dim).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    lstm: Vec<[[usize; 3]; 2]>,
    out_w: usize,
    out_b: usize,
    attn: Option<[usize; 3]>,
}

#[derive(Debug, Clone)]
enum HeadCache {
    Maxpool { logits: Tensor, pooled: MaxPoolOutput },
    Attention { out: AttentionOutput, context: Tensor },
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub scores: Vec<f64>,
    /// Rows of the aligned encoder input, and its stride in feature frames.
    pub steps: usize,
    pub stride: usize,
    h: Tensor,
    lstm: BiLstmCache,
    head: HeadCache,
}

impl ForwardPass {
    /// Per-step class logits (max-pool head only).
    pub fn frame_logits(&self) -> Option<&Tensor> {
        match &self.head {
            HeadCache::Maxpool { logits, .. } => Some(logits),
            HeadCache::Attention { .. } => None,
        }
    }

    /// Winning step per class (max-pool head only).
    pub fn argmax(&self) -> Option<&[usize]> {
        match &self.head {
            HeadCache::Maxpool { pooled, .. } => Some(&pooled.argmax),
            HeadCache::Attention { .. } => None,
        }
    }

    /// Attention weights over steps (attention head only).
    pub fn attention_weights(&self) -> Option<&[f64]> {
        match &self.head {
            HeadCache::Attention { out, .. } => Some(&out.weights),
            HeadCache::Maxpool { .. } => None,
        }
    }

    pub fn predicted(&self) -> usize {
        argmax(&self.scores)
    }
}

/// Index of the largest entry; the first on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SluModel {
    config: SluConfig,
    encoders: Vec<FrozenEncoder>,
    params: ParameterSet,
    layout: Layout,
}

fn add_rounded(ps: &mut ParameterSet, name: String, mut t: Tensor) -> Result<usize> {
    for v in t.data_mut() {
        *v = *v as f32 as f64;
    }
    ps.add(name, t)
}

const DIRS: [&str; 2] = ["fwd", "bwd"];

impl SluModel {
    /// Fresh model; every classifier tensor draws from an RNG named after it.
    pub fn new(config: SluConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let encoders = config
            .encoders
            .iter()
            .map(|s| FrozenEncoder::new(s.clone(), config.fbank.num_mels))
            .collect::<Result<Vec<_>>>()?;
        let h = config.hidden;
        let mut ps = ParameterSet::new();
        let mut lstm = Vec::new();
        for l in 0..config.lstm_layers {
            let d = if l == 0 { config.ensemble_dim() } else { 2 * h };
            let mut pair = [[0; 3]; 2];
            for (k, dir) in DIRS.iter().enumerate() {
                let prefix = format!("lstm/l{l}/{dir}");
                let p = LstmLayerParams::init(d, h, &mut named_rng(seed, &prefix));
                pair[k] = [
                    add_rounded(&mut ps, format!("{prefix}/w_ih"), p.w_ih)?,
                    add_rounded(&mut ps, format!("{prefix}/w_hh"), p.w_hh)?,
                    add_rounded(&mut ps, format!("{prefix}/bias"), p.bias)?,
                ];
            }
            lstm.push(pair);
        }
        let c = config.num_classes;
        let w = uniform(&[c, 2 * h], 1.0 / ((2 * h) as f64).sqrt(), &mut named_rng(seed, "out/w"));
        let out_w = add_rounded(&mut ps, "out/w".into(), w)?;
        let out_b = add_rounded(&mut ps, "out/b".into(), Tensor::zeros(&[c]))?;
        let attn = match config.head {
            Head::Maxpool => None,
            Head::Attention => {
                let a = config.attention_dim.unwrap_or(h);
                let p = AttentionParams::init(2 * h, a, &mut named_rng(seed, "attn"));
                Some([
                    add_rounded(&mut ps, "attn/w".into(), p.w)?,
                    add_rounded(&mut ps, "attn/b".into(), p.b)?,
                    add_rounded(&mut ps, "attn/v".into(), p.v)?,
                ])
            }
        };
        Ok(Self {
            config,
            encoders,
            params: ps,
            layout: Layout {
                lstm,
                out_w,
                out_b,
                attn,
            },
        })
    }

    pub fn config(&self) -> &SluConfig {
        &self.config
    }

    pub fn encoders(&self) -> &[FrozenEncoder] {
        &self.encoders
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// FBank, optionally mean-normalized.
    pub fn features(&self, w: &Waveform) -> Result<FeatureMatrix> {
        let f = fbank(w, &self.config.fbank)?;
        Ok(if self.config.mean_normalize { mean_normalize(&f) } else { f })
    }

    /// Runs every encoder and aligns their outputs.
    pub fn encode(&self, utt_id: &str, features: &FeatureMatrix) -> Result<EncoderOutput> {
        let outs = self
            .encoders
            .iter()
            .map(|e| e.encode(utt_id, features))
            .collect::<Result<Vec<_>>>()?;
        align_and_concat(&outs)
    }

    fn lstm_views(&self) -> Vec<[LstmWeights<'_>; 2]> {
        let p = &self.params;
        self.layout
            .lstm
            .iter()
            .map(|pair| {
                pair.map(|[a, b, c]| LstmWeights {
                    w_ih: p.value(a),
                    w_hh: p.value(b),
                    bias: p.value(c),
                })
            })
            .collect()
    }

    fn attention_view(&self) -> Option<AttentionWeights<'_>> {
        self.layout.attn.map(|[w, b, v]| AttentionWeights {
            w: self.params.value(w),
            b: self.params.value(b),
            v: self.params.value(v),
        })
    }

    pub fn forward_encoded(&self, enc: &EncoderOutput) -> Result<ForwardPass> {
        let x = &enc.data;
        let (h, lstm) = bilstm(x, &self.lstm_views())?;
        let w = self.params.value(self.layout.out_w);
        let b = self.params.value(self.layout.out_b);
        let (scores, head) = match self.attention_view() {
            None => {
                let logits = linear(&h, w, b)?;
                let pooled = max_pool_time(&logits)?;
                (pooled.scores.clone(), HeadCache::Maxpool { logits, pooled })
            }
            Some(att) => {
                let out = attention_pool(&h, att)?;
                let context = Tensor::matrix(1, out.context.len(), out.context.clone())?;
                let scores = linear(&context, w, b)?.into_data();
                (scores, HeadCache::Attention { out, context })
            }
        };
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite class scores".into()));
        }
        Ok(ForwardPass {
            scores,
            steps: x.rows(),
            stride: enc.stride,
            h,
            lstm,
            head,
        })
    }

    pub fn forward_features(&self, utt_id: &str, features: &FeatureMatrix) -> Result<ForwardPass> {
        self.forward_encoded(&self.encode(utt_id, features)?)
    }

    pub fn forward(&self, utt_id: &str, w: &Waveform) -> Result<ForwardPass> {
        self.forward_features(utt_id, &self.features(w)?)
    }

    /// Accumulates classifier gradients of `dscores · scores` into the
    /// parameter set. Encoder weights are never touched.
    pub fn backward(&mut self, pass: &ForwardPass, dscores: &[f64]) -> Result<()> {
        let c = self.config.num_classes;
        if dscores.len() != c {
            return Err(Error::shape("backward", format!("{} score gradients for {c} classes", dscores.len())));
        }
        let (ow, ob) = (self.layout.out_w, self.layout.out_b);
        let mut attn_grads = None;
        let dh = match &pass.head {
            HeadCache::Maxpool { pooled, .. } => {
                let dz = max_pool_time_backward(pooled, pass.steps, dscores);
                let g = linear_backward(&pass.h, self.params.value(ow), &dz)?;
                self.params.accumulate_grad(ow, &g.dw);
                self.params.accumulate_grad(ob, &g.db);
                g.dx
            }
            HeadCache::Attention { out, context } => {
                let dy = Tensor::matrix(1, c, dscores.to_vec())?;
                let g = linear_backward(context, self.params.value(ow), &dy)?;
                self.params.accumulate_grad(ow, &g.dw);
                self.params.accumulate_grad(ob, &g.db);
                let att = self.attention_view().expect("attention layout");
                let mut grads = AttentionParams {
                    w: Tensor::zeros(att.w.shape()),
                    b: Tensor::zeros(att.b.shape()),
                    v: Tensor::zeros(att.v.shape()),
                };
                let dh = attention_pool_backward(&pass.h, att, out, g.dx.data(), &mut grads)?;
                attn_grads = Some(grads);
                dh
            }
        };
        if let (Some(g), Some([w, b, v])) = (attn_grads, self.layout.attn) {
            self.params.accumulate_grad(w, &g.w);
            self.params.accumulate_grad(b, &g.b);
            self.params.accumulate_grad(v, &g.v);
        }
        let views = self.lstm_views();
        let mut grads: Vec<[LstmLayerParams; 2]> = views
            .iter()
            .map(|pair| pair.map(|w| LstmLayerParams::zeros(w.input_dim(), w.hidden())))
            .collect();
        bilstm_backward(&views, &pass.lstm, &dh, &mut grads)?;
        let layout = self.layout.lstm.clone();
        for (pair, g) in layout.iter().zip(&grads) {
            for (idx, gd) in pair.iter().zip(g) {
                self.params.accumulate_grad(idx[0], &gd.w_ih);
                self.params.accumulate_grad(idx[1], &gd.w_hh);
                self.params.accumulate_grad(idx[2], &gd.bias);
            }
        }
        Ok(())
    }

    /// Records for a checkpoint: config, classifier parameters, encoder weights.
    pub fn to_records(&self) -> Result<Vec<CheckpointRecord>> {
        let json = serde_json::to_vec(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        let mut records = vec![bytes_record("meta/config", &json)];
        for p in self.params.iter() {
            records.push(tensor_record(&p.name, &p.value));
        }
        for e in &self.encoders {
            for (name, t) in e.named_weights() {
                records.push(tensor_record(&name, t));
            }
        }
        Ok(records)
    }

    /// Rebuilds a model from checkpoint records; every classifier tensor and
    /// every encoder weight must be present.
    pub fn from_records(records: &[CheckpointRecord]) -> Result<Self> {
        let config_rec = find(records, "meta/config")?;
        let config: SluConfig = serde_json::from_slice(&record_bytes(config_rec)?)
            .map_err(|e| Error::Config(format!("checkpoint config: {e}")))?;
        let mut model = Self::new(config, 0)?;
        for i in 0..model.params.len() {
            let name = model.params.iter().nth(i).unwrap().name.clone();
            let t = record_tensor(find(records, &name)?)?;
            let slot = model.params.value_mut(i);
            if slot.shape() != t.shape() {
                return Err(Error::shape("from_records", format!("{name}: {:?} vs {:?}", t.shape(), slot.shape())));
            }
            *slot = t;
        }
        for e in &mut model.encoders {
            let names: Vec<String> = e.named_weights().into_iter().map(|(n, _)| n).collect();
            for name in names {
                e.set_weight(&name, record_tensor(find(records, &name)?)?)?;
            }
        }
        Ok(model)
    }
}

pub(crate) fn find<'a>(records: &'a [CheckpointRecord], name: &str) -> Result<&'a CheckpointRecord> {
    records
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::invalid(format!("checkpoint has no record {name}")))
}

pub(crate) fn tensor_record(name: &str, t: &Tensor) -> CheckpointRecord {
    CheckpointRecord {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        data: t.data().iter().map(|&v| v as f32).collect(),
    }
}

pub(crate) fn record_tensor(r: &CheckpointRecord) -> Result<Tensor> {
    Tensor::from_vec(&r.shape, r.data.iter().map(|&v| v as f64).collect())
}

pub(crate) fn bytes_record(name: &str, bytes: &[u8]) -> CheckpointRecord {
    CheckpointRecord {
        name: name.to_string(),
        shape: vec![bytes.len()],
        data: bytes.iter().map(|&b| b as f32).collect(),
    }
}

pub(crate) fn record_bytes(r: &CheckpointRecord) -> Result<Vec<u8>> {
    r.data
        .iter()
        .map(|&v| {
            if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                Ok(v as u8)
            } else {
                Err(Error::invalid(format!("record {} is not a byte string", r.name)))
            }
        })
        .collect()
}
