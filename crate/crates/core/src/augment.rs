//! Additive noise at a target SNR and reverberation by RIR convolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::{mean_power, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Kernels at or below this length are convolved directly.
const DIRECT_CONV_MAX_TAPS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct RoomImpulseResponse {
    taps: Vec<f64>,
    sample_rate: u32,
}

impl RoomImpulseResponse {
    pub fn new(taps: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!("RIR must be {SAMPLE_RATE} Hz, got {sample_rate}")));
        }
        if taps.is_empty() {
            return Err(Error::invalid("RIR has no taps"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("RIR tap is not finite"));
        }
        if taps.iter().all(|&t| t == 0.0) {
            return Err(Error::invalid("RIR is all zeros"));
        }
        Ok(Self { taps, sample_rate })
    }

    pub fn from_waveform(w: &Waveform) -> Result<Self> {
        Self::new(w.samples().to_vec(), w.sample_rate())
    }

    /// Exponentially decaying seeded noise tail behind a unit direct path.
    ///
    /// The envelope falls by 60 dB over `rt60_s`, which must lie in [0.1, 0.6].
    pub fn synthetic(rt60_s: f64, seed: u64) -> Result<Self> {
        if !(0.1..=0.6).contains(&rt60_s) {
            return Err(Error::invalid(format!("rt60 {rt60_s} s outside [0.1, 0.6]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (rt60_s * SAMPLE_RATE as f64).round() as usize;
        let decay = 3.0 * std::f64::consts::LN_10 / (rt60_s * SAMPLE_RATE as f64);
        let mut taps: Vec<f64> = (0..n)
            .map(|i| rng.gen_range(-1.0..1.0) * 0.3 * (-decay * i as f64).exp())
            .collect();
        taps[0] = 1.0;
        Self::new(taps, SAMPLE_RATE)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

/// Clean plus noise scaled to `snr_db`, before any peak normalization.
///
/// The noise segment starts at a seeded offset and wraps around (tiles) when
/// the noise is shorter than the clean signal.
pub fn mix_noise(clean: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::invalid(format!(
            "sample rates differ: {} vs {}",
            clean.sample_rate(),
            noise.sample_rate()
        )));
    }
    let p_clean = clean.power();
    if p_clean <= 0.0 {
        return Err(Error::invalid("clean signal has zero power"));
    }
    if noise.power() <= 0.0 {
        return Err(Error::invalid("noise has zero power"));
    }

    let n = clean.len();
    let src = noise.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = if src.len() > n {
        rng.gen_range(0..=src.len() - n)
    } else {
        rng.gen_range(0..src.len())
    };
    let segment: Vec<f64> = (0..n).map(|i| src[(start + i) % src.len()]).collect();
    let p_seg = mean_power(&segment);
    if p_seg <= 0.0 {
        return Err(Error::invalid("selected noise segment has zero power"));
    }
    let gain = (p_clean / (p_seg * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(clean
        .samples()
        .iter()
        .zip(&segment)
        .map(|(c, s)| c + gain * s)
        .collect())
}

pub fn add_noise_at_snr(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    seed: u64,
) -> Result<Waveform> {
    let mut mixed = mix_noise(clean, noise, snr_db, seed)?;
    peak_limit(&mut mixed);
    Waveform::new(mixed, clean.sample_rate())
}

/// Rescales so that no sample exceeds unit magnitude.
pub(crate) fn peak_limit(x: &mut [f64]) {
    let peak = x.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        for s in x.iter_mut() {
            *s /= peak;
        }
    }
}

/// Full linear convolution truncated to `signal.len()` samples.
pub fn convolve_truncated(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if kernel.len() <= DIRECT_CONV_MAX_TAPS {
        let mut out = vec![0.0; signal.len()];
        for (n, o) in out.iter_mut().enumerate() {
            let kmax = kernel.len().min(n + 1);
            *o = (0..kmax).map(|k| kernel[k] * signal[n - k]).sum();
        }
        return out;
    }
    let full = signal.len() + kernel.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let to_complex = |x: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); size];
        for (c, &s) in v.iter_mut().zip(x) {
            c.re = s;
        }
        v
    };
    let mut a = to_complex(signal);
    let mut b = to_complex(kernel);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..signal.len()].iter().map(|c| c.re * scale).collect()
}

/// Convolves with the RIR, truncates to the input length, then rescales so the
/// output peak matches the input peak.
pub fn reverberate(signal: &Waveform, rir: &RoomImpulseResponse) -> Result<Waveform> {
    if signal.sample_rate() != rir.sample_rate() {
        return Err(Error::invalid(format!(
            "sample rates differ: {} vs {}",
            signal.sample_rate(),
            rir.sample_rate()
        )));
    }
    let mut out = convolve_truncated(signal.samples(), rir.taps());
    let in_peak = signal.peak();
    let out_peak = out.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if out_peak > 0.0 && in_peak > 0.0 {
        let g = in_peak / out_peak;
        for s in out.iter_mut() {
            *s *= g;
        }
    }
    Waveform::new(out, signal.sample_rate())
}
