//! Log mel filterbank (FBank) features.
//!
//! Per frame: pre-emphasis, Hamming window, zero padding to `fft_size`,
//! power spectrum, triangular filters on the HTK mel scale, floored log.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hamming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbankConfig {
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    pub num_mels: usize,
    pub fft_size: usize,
    pub preemphasis: f64,
    pub window: WindowKind,
    pub log_floor: f64,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            frame_len_ms: 25.0,
            frame_shift_ms: 10.0,
            num_mels: 80,
            fft_size: 512,
            preemphasis: 0.97,
            window: WindowKind::Hamming,
            log_floor: 1e-10,
            mel_low_hz: 20.0,
            mel_high_hz: 7600.0,
        }
    }
}

impl FbankConfig {
    pub fn frame_len_samples(&self) -> usize {
        (self.frame_len_ms * SAMPLE_RATE as f64 / 1000.0).round() as usize
    }

    pub fn frame_shift_samples(&self) -> usize {
        (self.frame_shift_ms * SAMPLE_RATE as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("fbank: {m}")));
        let frame_len = self.frame_len_samples();
        if frame_len == 0 || self.frame_shift_samples() == 0 {
            return bad("frame length and shift must be at least one sample".into());
        }
        if !self.fft_size.is_power_of_two() || frame_len > self.fft_size {
            return bad(format!(
                "fft_size {} must be a power of two >= frame length {frame_len}",
                self.fft_size
            ));
        }
        if self.num_mels < 2 {
            return bad("num_mels must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return bad(format!("preemphasis {} not in [0, 1)", self.preemphasis));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if !(self.mel_low_hz >= 0.0 && self.mel_low_hz < self.mel_high_hz && self.mel_high_hz <= nyquist)
        {
            return bad(format!(
                "need 0 <= mel_low_hz < mel_high_hz <= {nyquist}, got {} / {}",
                self.mel_low_hz, self.mel_high_hz
            ));
        }
        Ok(())
    }
}

/// T×D frame-level features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    dim: usize,
    frame_shift_ms: f64,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, rows: usize, dim: usize, frame_shift_ms: f64) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::invalid(format!("feature matrix {rows}x{dim} is empty")));
        }
        if data.len() != rows * dim {
            return Err(Error::shape(
                "FeatureMatrix::new",
                format!("{} values for {rows}x{dim}", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "feature entry ({}, {}) is not finite",
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            data,
            rows,
            dim,
            frame_shift_ms,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_shift_ms(&self) -> f64 {
        self.frame_shift_ms
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.data[t * self.dim + d]
    }
}

pub fn frame_count(n_samples: usize, cfg: &FbankConfig) -> Result<usize> {
    let len = cfg.frame_len_samples();
    let shift = cfg.frame_shift_samples();
    if n_samples < len {
        return Err(Error::invalid(format!(
            "{n_samples} samples is shorter than one {len}-sample frame"
        )));
    }
    Ok(1 + (n_samples - len) / shift)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters over the `fft_size / 2 + 1` power-spectrum bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// (first bin, weights) per filter
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(cfg: &FbankConfig) -> Self {
        let n_bins = cfg.fft_size / 2 + 1;
        let mel_low = hz_to_mel(cfg.mel_low_hz);
        let mel_high = hz_to_mel(cfg.mel_high_hz);
        let step = (mel_high - mel_low) / (cfg.num_mels + 1) as f64;
        let bin_hz = SAMPLE_RATE as f64 / cfg.fft_size as f64;

        let mut filters = Vec::with_capacity(cfg.num_mels);
        let mut centers_hz = Vec::with_capacity(cfg.num_mels);
        for m in 0..cfg.num_mels {
            let left = mel_low + m as f64 * step;
            let center = left + step;
            let right = center + step;
            centers_hz.push(mel_to_hz(center));
            let mut first = None;
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let mel = hz_to_mel(k as f64 * bin_hz);
                let w = if mel > left && mel <= center {
                    (mel - left) / (center - left)
                } else if mel > center && mel < right {
                    (right - mel) / (right - center)
                } else {
                    0.0
                };
                if w > 0.0 {
                    first.get_or_insert(k);
                    weights.push(w);
                } else if first.is_some() {
                    break;
                }
            }
            filters.push((first.unwrap_or(0), weights));
        }
        Self {
            filters,
            centers_hz,
            n_bins,
        }
    }

    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Weight of `bin` in filter `m`.
    pub fn weight(&self, m: usize, bin: usize) -> f64 {
        let (first, w) = &self.filters[m];
        if bin >= *first && bin < first + w.len() {
            w[bin - first]
        } else {
            0.0
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (o, (first, w)) in out.iter_mut().zip(&self.filters) {
            *o = w
                .iter()
                .zip(&power[*first..first + w.len()])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
}

/// Reusable extractor; holds the FFT plan, window and filterbank.
pub struct FbankExtractor {
    cfg: FbankConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bank: MelFilterbank,
}

impl FbankExtractor {
    pub fn new(cfg: &FbankConfig) -> Result<Self> {
        cfg.validate()?;
        let len = cfg.frame_len_samples();
        let window = match cfg.window {
            WindowKind::Hamming => hamming(len),
        };
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg: cfg.clone(),
            fft,
            window,
            bank: MelFilterbank::new(cfg),
        })
    }

    pub fn config(&self) -> &FbankConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Mel energies before the log, row-major T×num_mels.
    pub fn mel_energies(&self, w: &Waveform) -> Result<(Vec<f64>, usize)> {
        w.require_rate("fbank")?;
        let frames = frame_count(w.len(), &self.cfg)?;
        let len = self.cfg.frame_len_samples();
        let shift = self.cfg.frame_shift_samples();
        let n_mels = self.cfg.num_mels;
        let n_bins = self.bank.n_bins();
        let samples = w.samples();

        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.fft_size];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        let mut out = vec![0.0; frames * n_mels];
        for t in 0..frames {
            let frame = &samples[t * shift..t * shift + len];
            buf.fill(Complex64::new(0.0, 0.0));
            preemphasize_windowed(frame, self.cfg.preemphasis, &self.window, &mut buf);
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.bank.apply(&power, &mut out[t * n_mels..(t + 1) * n_mels]);
        }
        Ok((out, frames))
    }

    pub fn extract(&self, w: &Waveform) -> Result<FeatureMatrix> {
        let (mut energies, frames) = self.mel_energies(w)?;
        let floor = self.cfg.log_floor;
        for e in energies.iter_mut() {
            *e = e.max(floor).ln();
        }
        if energies.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "non-finite filterbank energy; check fbank config".into(),
            ));
        }
        FeatureMatrix::new(energies, frames, self.cfg.num_mels, self.cfg.frame_shift_ms)
    }
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Pre-emphasis within the frame; the first sample is emphasized against itself.
fn preemphasize_windowed(frame: &[f64], coeff: f64, window: &[f64], out: &mut [Complex64]) {
    for (i, (&s, &w)) in frame.iter().zip(window).enumerate() {
        let prev = if i == 0 { s } else { frame[i - 1] };
        out[i] = Complex64::new((s - coeff * prev) * w, 0.0);
    }
}

pub fn fbank(w: &Waveform, cfg: &FbankConfig) -> Result<FeatureMatrix> {
    FbankExtractor::new(cfg)?.extract(w)
}

/// Per-utterance mean normalization: subtracts each column's mean over frames.
pub fn mean_normalize(f: &FeatureMatrix) -> FeatureMatrix {
    let (rows, dim) = (f.rows, f.dim);
    let mut means = vec![0.0; dim];
    for t in 0..rows {
        for (m, v) in means.iter_mut().zip(f.row(t)) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= rows as f64;
    }
    let mut data = f.data.clone();
    for row in data.chunks_exact_mut(dim) {
        for (v, m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    FeatureMatrix {
        data,
        rows,
        dim,
        frame_shift_ms: f.frame_shift_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_arithmetic() {
        let cfg = FbankConfig::default();
        assert_eq!(frame_count(16000, &cfg).unwrap(), 98);
        assert_eq!(frame_count(240_000, &cfg).unwrap(), 1498);
        assert_eq!(frame_count(400, &cfg).unwrap(), 1);
        assert!(frame_count(399, &cfg).is_err());
    }

    #[test]
    fn zeros_hit_the_floor() {
        let cfg = FbankConfig::default();
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let f = fbank(&w, &cfg).unwrap();
        assert_eq!((f.rows(), f.dim()), (98, 80));
        let expect = 1e-10_f64.ln();
        assert!(f.data().iter().all(|&v| v == expect));
    }

    #[test]
    fn rejects_other_rates() {
        let w = Waveform::new(vec![0.0; 8000], 8000).unwrap();
        assert!(fbank(&w, &FbankConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = FbankConfig::default();
        cfg.fft_size = 256;
        assert!(cfg.validate().is_err());
        let mut cfg = FbankConfig::default();
        cfg.mel_high_hz = 9000.0;
        assert!(cfg.validate().is_err());
        let mut cfg = FbankConfig::default();
        cfg.num_mels = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = FbankConfig::default();
        cfg.preemphasis = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn filter_weights_bounded() {
        let bank = MelFilterbank::new(&FbankConfig::default());
        for k in 0..bank.n_bins() {
            let total: f64 = (0..bank.num_filters()).map(|m| bank.weight(m, k)).sum();
            assert!(total <= 2.0);
            for m in 0..bank.num_filters() {
                assert!(bank.weight(m, k) >= 0.0);
            }
        }
        // every filter catches at least one bin at the default resolution
        for m in 0..bank.num_filters() {
            assert!((0..bank.n_bins()).any(|k| bank.weight(m, k) > 0.0), "filter {m} empty");
        }
    }

    #[test]
    fn mean_normalization() {
        let f = FeatureMatrix::new(vec![3.0; 12], 4, 3, 10.0).unwrap();
        assert!(mean_normalize(&f).data().iter().all(|&v| v == 0.0));

        let data: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 * 0.73 - 2.0).collect();
        let f = FeatureMatrix::new(data, 10, 4, 10.0).unwrap();
        let once = mean_normalize(&f);
        for d in 0..4 {
            let mean: f64 = (0..10).map(|t| once.get(t, d)).sum::<f64>() / 10.0;
            assert!(mean.abs() < 1e-9);
        }
        let twice = mean_normalize(&once);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
