//! Slow reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use ensemble_slu::audio::{Waveform, SAMPLE_RATE};
use ensemble_slu::features::FbankConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_wave(n: usize, seed: u64, amp: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), SAMPLE_RATE).unwrap()
}

fn mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

/// Mel energies by a direct O(N²) DFT and triangles evaluated from scratch.
pub fn direct_mel_energies(x: &[f64], cfg: &FbankConfig) -> Vec<Vec<f64>> {
    let len = (cfg.frame_len_ms * 16.0).round() as usize;
    let shift = (cfg.frame_shift_ms * 16.0).round() as usize;
    let n_fft = cfg.fft_size;
    let frames = 1 + (x.len() - len) / shift;
    let lo = mel(cfg.mel_low_hz);
    let hi = mel(cfg.mel_high_hz);
    let pts: Vec<f64> = (0..cfg.num_mels + 2)
        .map(|i| lo + (hi - lo) * i as f64 / (cfg.num_mels + 1) as f64)
        .collect();
    (0..frames)
        .map(|t| {
            let frame = &x[t * shift..t * shift + len];
            let mut buf = vec![0.0; n_fft];
            for i in 0..len {
                let prev = if i == 0 { frame[0] } else { frame[i - 1] };
                let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos();
                buf[i] = (frame[i] - cfg.preemphasis * prev) * w;
            }
            let power: Vec<f64> = (0..=n_fft / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in buf.iter().enumerate() {
                        let a = -2.0 * PI * (k * n % n_fft) as f64 / n_fft as f64;
                        re += v * a.cos();
                        im += v * a.sin();
                    }
                    re * re + im * im
                })
                .collect();
            (0..cfg.num_mels)
                .map(|m| {
                    let (l, c, r) = (pts[m], pts[m + 1], pts[m + 2]);
                    power
                        .iter()
                        .enumerate()
                        .map(|(k, p)| {
                            let f = mel(k as f64 * 16000.0 / n_fft as f64);
                            let w = if f > l && f <= c {
                                (f - l) / (c - l)
                            } else if f > c && f < r {
                                (r - f) / (r - c)
                            } else {
                                0.0
                            };
                            w * p
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

pub fn direct_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| (0..h.len().min(n + 1)).map(|k| h[k] * x[n - k]).sum())
        .collect()
}


/// Largest normalized cross-correlation of `x` against chirp templates
/// covering the event duration range; a classic matched-filter detector.
pub fn matched_filter_score(x: &[f64], durations_s: &[f64]) -> f64 {
    use ensemble_slu::synth::{event_template, EventKind};
    use rustfft::{num_complex::Complex, FftPlanner};

    let longest = durations_s.iter().map(|d| (d * SAMPLE_RATE as f64).round() as usize).max().unwrap();
    let n = (x.len() + longest).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xs: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    xs.resize(n, Complex::new(0.0, 0.0));
    fwd.process(&mut xs);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let mut best: f64 = 0.0;
    for &d in durations_s {
        let len = (d * SAMPLE_RATE as f64).round() as usize;
        let t = event_template(EventKind::Chirp, len, SAMPLE_RATE);
        let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut ts: Vec<Complex<f64>> = t.iter().map(|&v| Complex::new(v, 0.0)).collect();
        ts.resize(n, Complex::new(0.0, 0.0));
        fwd.process(&mut ts);
        let mut prod: Vec<Complex<f64>> = xs.iter().zip(&ts).map(|(a, b)| a * b.conj()).collect();
        inv.process(&mut prod);
        // lags 0..=x.len()-len are the fully overlapping positions
        let peak = prod[..=x.len() - len.min(x.len())].iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        best = best.max(peak / n as f64 / norm);
    }
    best / rms
}
