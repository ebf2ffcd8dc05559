//! Frozen acoustic encoders and frame-rate alignment of their outputs.
//!
//! Two seeded kinds stand in for pre-trained acoustic models: a strided
//! frame-stacking projection and a single-layer recurrent network. A third
//! kind loads matrices verbatim from a feature archive so that real encoder
//! outputs can be imported.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::archive::{read_feature, read_index, ArchiveIndexEntry};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::init::{named_rng, uniform};
use crate::nn::{lstm_sequence, LstmLayerParams, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    FrozenProjection,
    FrozenRecurrent,
    Precomputed,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub id: String,
    pub kind: EncoderKind,
    pub output_dim: usize,
    #[serde(default = "one")]
    pub frame_stride: usize,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_scp: Option<PathBuf>,
    /// Half-open range of feature columns the encoder reads; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_bins: Option<[usize; 2]>,
}

impl EncoderSpec {
    pub fn projection(id: &str, output_dim: usize, frame_stride: usize, init_seed: u64) -> Self {
        Self {
            id: id.to_string(),
            kind: EncoderKind::FrozenProjection,
            output_dim,
            frame_stride,
            init_seed,
            feature_scp: None,
            input_bins: None,
        }
    }

    pub fn recurrent(id: &str, output_dim: usize, frame_stride: usize, init_seed: u64) -> Self {
        Self {
            kind: EncoderKind::FrozenRecurrent,
            ..Self::projection(id, output_dim, frame_stride, init_seed)
        }
    }

    pub fn precomputed(id: &str, output_dim: usize, frame_stride: usize, scp: PathBuf) -> Self {
        Self {
            kind: EncoderKind::Precomputed,
            feature_scp: Some(scp),
            ..Self::projection(id, output_dim, frame_stride, 0)
        }
    }

    pub fn with_bins(mut self, lo: usize, hi: usize) -> Self {
        self.input_bins = Some([lo, hi]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.chars().any(|c| c.is_whitespace() || c == '/') {
            return Err(Error::Config(format!("encoder id {:?} is not a plain token", self.id)));
        }
        if self.output_dim == 0 {
            return Err(Error::Config(format!("encoder {}: output_dim must be >= 1", self.id)));
        }
        if self.frame_stride == 0 {
            return Err(Error::Config(format!("encoder {}: frame_stride must be >= 1", self.id)));
        }
        if let Some([lo, hi]) = self.input_bins {
            if lo >= hi {
                return Err(Error::Config(format!("encoder {}: empty input_bins {lo}..{hi}", self.id)));
            }
        }
        if self.kind == EncoderKind::Precomputed && self.feature_scp.is_none() {
            return Err(Error::Config(format!("encoder {}: precomputed kind needs feature_scp", self.id)));
        }
        Ok(())
    }
}

/// Encoder output at `stride` input frames per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub data: Tensor,
    pub stride: usize,
}

impl EncoderOutput {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    Projection { w: Tensor, b: Tensor },
    Recurrent(LstmLayerParams),
    Precomputed(HashMap<String, ArchiveIndexEntry>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoder {
    spec: EncoderSpec,
    input_dim: usize,
    weights: Weights,
}

fn round_f32(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = *v as f32 as f64;
    }
}

impl FrozenEncoder {
    /// Builds the encoder for features with `feature_dim` columns. Seeded
    /// weights are rounded to `f32` so they survive a checkpoint exactly.
    pub fn new(spec: EncoderSpec, feature_dim: usize) -> Result<Self> {
        spec.validate()?;
        let [lo, hi] = spec.input_bins.unwrap_or([0, feature_dim]);
        if hi > feature_dim {
            return Err(Error::Config(format!(
                "encoder {}: input_bins {lo}..{hi} exceed feature dim {feature_dim}",
                spec.id
            )));
        }
        let input_dim = hi - lo;
        let weights = match spec.kind {
            EncoderKind::FrozenProjection => {
                let fan_in = input_dim * spec.frame_stride;
                let mut rng = named_rng(spec.init_seed, &format!("enc/{}/w", spec.id));
                let mut w = uniform(&[spec.output_dim, fan_in], 1.0 / (fan_in as f64).sqrt(), &mut rng);
                let mut b = uniform(&[spec.output_dim], 0.1, &mut rng);
                round_f32(&mut w);
                round_f32(&mut b);
                Weights::Projection { w, b }
            }
            EncoderKind::FrozenRecurrent => {
                let mut rng = named_rng(spec.init_seed, &format!("enc/{}/lstm", spec.id));
                let mut p = LstmLayerParams::init(input_dim, spec.output_dim, &mut rng);
                round_f32(&mut p.w_ih);
                round_f32(&mut p.w_hh);
                Weights::Recurrent(p)
            }
            EncoderKind::Precomputed => {
                let scp = spec.feature_scp.as_ref().expect("validated");
                let index = read_index(scp)?
                    .into_iter()
                    .map(|e| (e.utt_id.clone(), e))
                    .collect();
                Weights::Precomputed(index)
            }
        };
        Ok(Self {
            spec,
            input_dim,
            weights,
        })
    }

    /// Projection encoder with explicit weights `w: [out × stride·bins]`.
    pub fn projection_with_weights(spec: EncoderSpec, feature_dim: usize, w: Tensor, b: Tensor) -> Result<Self> {
        let mut enc = Self::new(spec, feature_dim)?;
        match &mut enc.weights {
            Weights::Projection { w: w0, b: b0 } => {
                if w0.shape() != w.shape() || b0.shape() != b.shape() {
                    return Err(Error::shape(
                        "projection_with_weights",
                        format!("expected {:?} and {:?}", w0.shape(), b0.shape()),
                    ));
                }
                *w0 = w;
                *b0 = b;
            }
            _ => return Err(Error::Config("explicit weights need the frozen_projection kind".into())),
        }
        Ok(enc)
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Named weight tensors, empty for the precomputed kind.
    pub fn named_weights(&self) -> Vec<(String, &Tensor)> {
        let id = &self.spec.id;
        match &self.weights {
            Weights::Projection { w, b } => vec![(format!("enc/{id}/w"), w), (format!("enc/{id}/b"), b)],
            Weights::Recurrent(p) => vec![
                (format!("enc/{id}/w_ih"), &p.w_ih),
                (format!("enc/{id}/w_hh"), &p.w_hh),
                (format!("enc/{id}/bias"), &p.bias),
            ],
            Weights::Precomputed(_) => Vec::new(),
        }
    }

    /// Replaces a named weight tensor, e.g. when loading a checkpoint.
    pub fn set_weight(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.spec.id.clone();
        let slot = match (&mut self.weights, name.strip_prefix(&format!("enc/{id}/"))) {
            (Weights::Projection { w, .. }, Some("w")) => w,
            (Weights::Projection { b, .. }, Some("b")) => b,
            (Weights::Recurrent(p), Some("w_ih")) => &mut p.w_ih,
            (Weights::Recurrent(p), Some("w_hh")) => &mut p.w_hh,
            (Weights::Recurrent(p), Some("bias")) => &mut p.bias,
            _ => return Err(Error::invalid(format!("encoder {id} has no weight {name}"))),
        };
        if slot.shape() != value.shape() {
            return Err(Error::shape("set_weight", format!("{name}: {:?} vs {:?}", slot.shape(), value.shape())));
        }
        *slot = value;
        Ok(())
    }

    fn band(&self, features: &FeatureMatrix) -> Result<Tensor> {
        let [lo, hi] = self.spec.input_bins.unwrap_or([0, features.dim()]);
        if hi > features.dim() || hi - lo != self.input_dim {
            return Err(Error::shape(
                "encode",
                format!("encoder {} expects {} feature columns, got {}", self.spec.id, self.input_dim, features.dim()),
            ));
        }
        let mut data = Vec::with_capacity(features.rows() * self.input_dim);
        for t in 0..features.rows() {
            data.extend_from_slice(&features.row(t)[lo..hi]);
        }
        Tensor::matrix(features.rows(), self.input_dim, data)
    }

    /// Encodes one utterance; `utt_id` is only consulted by the precomputed kind.
    pub fn encode(&self, utt_id: &str, features: &FeatureMatrix) -> Result<EncoderOutput> {
        let stride = self.spec.frame_stride;
        let data = match &self.weights {
            Weights::Projection { w, b } => {
                let x = self.band(features)?;
                let t_out = x.rows().div_ceil(stride);
                let d = self.input_dim;
                // stack `stride` consecutive frames per row, zero-padding the tail
                let mut stacked = vec![0.0; t_out * stride * d];
                stacked[..x.len()].copy_from_slice(x.data());
                let stacked = Tensor::matrix(t_out, stride * d, stacked)?;
                let mut y = crate::nn::linear(&stacked, w, b)?;
                for v in y.data_mut() {
                    *v = v.tanh();
                }
                y
            }
            Weights::Recurrent(p) => {
                let x = self.band(features)?;
                let (h, _) = lstm_sequence(&x, p.weights(), false)?;
                let rows: Vec<f64> = (0..h.rows())
                    .step_by(stride)
                    .flat_map(|t| h.row(t).iter().copied())
                    .collect();
                let n = rows.len() / self.spec.output_dim;
                Tensor::matrix(n, self.spec.output_dim, rows)?
            }
            Weights::Precomputed(index) => {
                let entry = index.get(utt_id).ok_or_else(|| {
                    Error::invalid(format!("encoder {}: no precomputed features for {utt_id}", self.spec.id))
                })?;
                let m = read_feature(entry)?;
                if m.dim() != self.spec.output_dim {
                    return Err(Error::shape(
                        "encode",
                        format!("encoder {}: stored dim {} != output_dim {}", self.spec.id, m.dim(), self.spec.output_dim),
                    ));
                }
                let rows = m.rows();
                Tensor::matrix(rows, m.dim(), m.into_data())?
            }
        };
        if !data.is_finite() {
            return Err(Error::Numeric(format!("encoder {} produced non-finite output", self.spec.id)));
        }
        Ok(EncoderOutput { data, stride })
    }
}

/// Brings all outputs to the finest stride by row repetition, truncates to
/// the shortest, and concatenates along the feature axis. Lengths (in input
/// frames) may differ by at most the largest stride before truncation.
pub fn align_and_concat(outputs: &[EncoderOutput]) -> Result<EncoderOutput> {
    let Some(fine) = outputs.iter().map(|o| o.stride).min() else {
        return Err(Error::invalid("align_and_concat: no encoder outputs"));
    };
    let coarse = outputs.iter().map(|o| o.stride).max().unwrap_or(fine);
    for o in outputs {
        if o.stride == 0 || o.stride % fine != 0 {
            return Err(Error::shape(
                "align_and_concat",
                format!("stride {} is not a multiple of the finest stride {fine}", o.stride),
            ));
        }
    }
    let lengths: Vec<usize> = outputs.iter().map(|o| o.rows() * (o.stride / fine)).collect();
    let shortest = *lengths.iter().min().unwrap();
    let longest = *lengths.iter().max().unwrap();
    if (longest - shortest) * fine > coarse {
        return Err(Error::shape(
            "align_and_concat",
            format!("lengths {shortest} and {longest} differ by more than {coarse} input frames"),
        ));
    }
    if shortest == 0 {
        return Err(Error::shape("align_and_concat", "zero rows after truncation"));
    }
    let width: usize = outputs.iter().map(|o| o.dim()).sum();
    let mut data = Vec::with_capacity(shortest * width);
    for t in 0..shortest {
        for o in outputs {
            data.extend_from_slice(o.data.row(t / (o.stride / fine)));
        }
    }
    Ok(EncoderOutput {
        data: Tensor::matrix(shortest, width, data)?,
        stride: fine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(rows: usize, dim: usize) -> FeatureMatrix {
        let data = (0..rows * dim).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect();
        FeatureMatrix::new(data, rows, dim, 10.0).unwrap()
    }

    fn out(rows: usize, dim: usize, stride: usize, base: f64) -> EncoderOutput {
        let data = (0..rows * dim).map(|i| base + i as f64).collect();
        EncoderOutput {
            data: Tensor::matrix(rows, dim, data).unwrap(),
            stride,
        }
    }

    #[test]
    fn identity_projection_is_tanh_of_padded_input() {
        let f = features(5, 3);
        let spec = EncoderSpec::projection("a", 4, 1, 0);
        let mut w = Tensor::zeros(&[4, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let enc = FrozenEncoder::projection_with_weights(spec, 3, w, Tensor::zeros(&[4])).unwrap();
        let y = enc.encode("u", &f).unwrap();
        assert_eq!(y.data.shape(), &[5, 4]);
        for t in 0..5 {
            for k in 0..3 {
                assert_eq!(y.data.at(t, k), f.get(t, k).tanh());
            }
            assert_eq!(y.data.at(t, 3), 0.0);
        }
    }

    #[test]
    fn strided_lengths() {
        let f = features(98, 6);
        for spec in [EncoderSpec::projection("a", 8, 4, 3), EncoderSpec::recurrent("b", 5, 4, 3)] {
            let y = FrozenEncoder::new(spec, 6).unwrap().encode("u", &f).unwrap();
            assert_eq!(y.rows(), 25);
            assert_eq!(y.stride, 4);
        }
    }

    #[test]
    fn deterministic() {
        let f = features(20, 6);
        let spec = EncoderSpec::recurrent("b", 5, 2, 9).with_bins(2, 6);
        let a = FrozenEncoder::new(spec.clone(), 6).unwrap().encode("u", &f).unwrap();
        let b = FrozenEncoder::new(spec, 6).unwrap().encode("u", &f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn band_outside_features_rejected() {
        let spec = EncoderSpec::projection("a", 4, 1, 0).with_bins(2, 9);
        assert!(FrozenEncoder::new(spec, 6).is_err());
    }

    #[test]
    fn concat_equal_strides() {
        let y = align_and_concat(&[out(3, 4, 1, 0.0), out(3, 2, 1, 100.0)]).unwrap();
        assert_eq!(y.data.shape(), &[3, 6]);
        assert_eq!(y.data.row(1), &[4.0, 5.0, 6.0, 7.0, 102.0, 103.0]);
    }

    #[test]
    fn concat_repeats_coarse_rows() {
        let y = align_and_concat(&[out(8, 1, 1, 0.0), out(2, 1, 4, 100.0)]).unwrap();
        assert_eq!(y.data.shape(), &[8, 2]);
        let b: Vec<f64> = (0..8).map(|t| y.data.at(t, 1)).collect();
        assert_eq!(b, vec![100.0, 100.0, 100.0, 100.0, 101.0, 101.0, 101.0, 101.0]);
        assert_eq!(y.stride, 1);
    }

    #[test]
    fn tolerance_boundary() {
        let y = align_and_concat(&[out(8, 1, 1, 0.0), out(1, 1, 4, 100.0)]).unwrap();
        assert_eq!(y.rows(), 4);
        assert!(align_and_concat(&[out(9, 1, 1, 0.0), out(1, 1, 4, 100.0)]).is_err());
    }

    #[test]
    fn swapping_permutes_blocks() {
        let a = out(6, 3, 2, 0.0);
        let b = out(3, 2, 4, 50.0);
        let ab = align_and_concat(&[a.clone(), b.clone()]).unwrap();
        let ba = align_and_concat(&[b, a]).unwrap();
        for t in 0..ab.rows() {
            assert_eq!(&ab.data.row(t)[..3], &ba.data.row(t)[2..]);
            assert_eq!(&ab.data.row(t)[3..], &ba.data.row(t)[..2]);
        }
    }
}
