//! Signal-processing checks against slow, independent reference computations.

mod common;

use std::f64::consts::PI;

use ensemble_slu::audio::{decode_wav, encode_wav, Waveform, SAMPLE_RATE};
use ensemble_slu::augment::{add_noise_at_snr, mix_noise, reverberate, RoomImpulseResponse};
use ensemble_slu::features::{fbank, frame_count, mean_normalize, FbankConfig, FbankExtractor};
use proptest::prelude::*;

use common::{direct_convolution, direct_mel_energies, random_wave};

#[test]
fn fbank_matches_direct_dft() {
    let cfg = FbankConfig::default();
    let ex = FbankExtractor::new(&cfg).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let w = random_wave(1600, seed, 0.5);
        let (fast, frames) = ex.mel_energies(&w).unwrap();
        let slow = direct_mel_energies(w.samples(), &cfg);
        assert_eq!(frames, slow.len());
        for (t, row) in slow.iter().enumerate() {
            for (m, &e) in row.iter().enumerate() {
                let f = fast[t * cfg.num_mels + m];
                worst = worst.max((f - e).abs() / e.abs().max(1e-300));
            }
        }
    }
    assert!(worst < 1e-6, "worst relative deviation {worst:e}");
}

#[test]
fn fbank_shapes() {
    let cfg = FbankConfig::default();
    assert_eq!(frame_count(16000, &cfg).unwrap(), 98);
    assert_eq!(frame_count(400, &cfg).unwrap(), 1);
    assert!(frame_count(399, &cfg).is_err());
    let f = fbank(&random_wave(24000, 1, 0.3), &cfg).unwrap();
    assert_eq!((f.rows(), f.dim()), (148, 80));
}

#[test]
fn silence_hits_the_floor() {
    let cfg = FbankConfig::default();
    let f = fbank(&Waveform::new(vec![0.0; 1600], SAMPLE_RATE).unwrap(), &cfg).unwrap();
    assert!(f.data().iter().all(|&v| v == cfg.log_floor.ln()));
}

#[test]
fn tone_peaks_in_the_right_filter() {
    let cfg = FbankConfig::default();
    let ex = FbankExtractor::new(&cfg).unwrap();
    let hz = 1000.0;
    let s: Vec<f64> = (0..8000).map(|i| 0.5 * (2.0 * PI * hz * i as f64 / 16000.0).sin()).collect();
    let f = ex.extract(&Waveform::new(s, SAMPLE_RATE).unwrap()).unwrap();
    let row = f.row(10);
    let best = (0..row.len()).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
    let centers = ex.filterbank().centers_hz();
    let nearest = (0..centers.len())
        .min_by(|&a, &b| (centers[a] - hz).abs().partial_cmp(&(centers[b] - hz).abs()).unwrap())
        .unwrap();
    assert!(best.abs_diff(nearest) <= 1, "peak {best}, nearest center {nearest}");
}

#[test]
fn reverb_matches_direct_convolution() {
    for (seed, rt60) in [(1u64, 0.1), (2, 0.25), (3, 0.6)] {
        let x = random_wave(6000, seed, 0.6);
        let rir = RoomImpulseResponse::synthetic(rt60, seed + 10).unwrap();
        let got = reverberate(&x, &rir).unwrap();
        let mut want = direct_convolution(x.samples(), rir.taps());
        let peak = want.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for v in &mut want {
            *v *= x.peak() / peak;
        }
        let err = got.samples().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "rt60 {rt60}: {err:e}");
    }
}

#[test]
fn short_kernels_match_too() {
    let x = random_wave(500, 4, 0.9);
    let rir = RoomImpulseResponse::new(vec![0.5, -0.25, 0.125], SAMPLE_RATE).unwrap();
    let got = reverberate(&x, &rir).unwrap();
    let want = direct_convolution(x.samples(), rir.taps());
    let g = x.peak() / want.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for (a, b) in got.samples().iter().zip(&want) {
        assert!((a - g * b).abs() < 1e-12);
    }
}

#[test]
fn unit_impulse_rir_is_identity() {
    let x = random_wave(1000, 5, 0.7);
    let rir = RoomImpulseResponse::new(vec![1.0], SAMPLE_RATE).unwrap();
    assert_eq!(reverberate(&x, &rir).unwrap(), x);
    assert!(RoomImpulseResponse::new(vec![0.0; 4], SAMPLE_RATE).is_err());
    assert!(RoomImpulseResponse::new(vec![], SAMPLE_RATE).is_err());
}

fn measured_snr(clean: &Waveform, mixed: &[f64]) -> f64 {
    let p_c = clean.power();
    let p_n = clean
        .samples()
        .iter()
        .zip(mixed)
        .map(|(c, m)| (m - c) * (m - c))
        .sum::<f64>()
        / mixed.len() as f64;
    10.0 * (p_c / p_n).log10()
}

#[test]
fn snr_is_exact_before_normalization() {
    for (i, snr) in [-5.0, 0.0, 3.5, 10.0, 20.0, 40.0].into_iter().enumerate() {
        let clean = random_wave(8000, i as u64, 0.3);
        let noise = random_wave(3000, 100 + i as u64, 0.8);
        let mixed = mix_noise(&clean, &noise, snr, 7).unwrap();
        let got = measured_snr(&clean, &mixed);
        assert!((got - snr).abs() < 1e-6, "{snr}: {got}");
    }
}

#[test]
fn peak_normalization_keeps_snr() {
    let clean = random_wave(4000, 8, 0.95);
    let noise = random_wave(4000, 9, 0.95);
    let out = add_noise_at_snr(&clean, &noise, -3.0, 1).unwrap();
    assert!(out.peak() <= 1.0);
    // scaling both parts by the same factor leaves the ratio alone
    let k = out.peak() / mix_noise(&clean, &noise, -3.0, 1).unwrap().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scaled = Waveform::new(clean.samples().iter().map(|v| v * k).collect(), SAMPLE_RATE).unwrap();
    assert!((measured_snr(&scaled, out.samples()) + 3.0).abs() < 1e-6);
}

#[test]
fn zero_power_inputs_rejected() {
    let z = Waveform::new(vec![0.0; 100], SAMPLE_RATE).unwrap();
    let x = random_wave(100, 1, 0.5);
    assert!(add_noise_at_snr(&z, &x, 0.0, 0).is_err());
    assert!(add_noise_at_snr(&x, &z, 0.0, 0).is_err());
    assert!(add_noise_at_snr(&x, &x, f64::NAN, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wav_round_trip_is_byte_identical(codes in prop::collection::vec(any::<i16>(), 1..400)) {
        let w = Waveform::new(codes.iter().map(|&c| c as f64 / 32768.0).collect(), SAMPLE_RATE).unwrap();
        let bytes = encode_wav(&w).unwrap();
        let back = decode_wav(&bytes).unwrap();
        prop_assert_eq!(&back, &w);
        prop_assert_eq!(encode_wav(&back).unwrap(), bytes);
    }

    #[test]
    fn wav_quantization_error_is_bounded(samples in prop::collection::vec(-1.0f64..1.0, 1..300)) {
        let w = Waveform::new(samples, SAMPLE_RATE).unwrap();
        let back = decode_wav(&encode_wav(&w).unwrap()).unwrap();
        for (a, b) in w.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn mean_normalize_zero_mean_and_idempotent(seed in 0u64..1000, n in 400usize..3000) {
        let f = mean_normalize(&fbank(&random_wave(n, seed, 0.4), &FbankConfig::default()).unwrap());
        for d in 0..f.dim() {
            let m: f64 = (0..f.rows()).map(|t| f.get(t, d)).sum::<f64>() / f.rows() as f64;
            prop_assert!(m.abs() < 1e-9);
        }
        let g = mean_normalize(&f);
        for (a, b) in f.data().iter().zip(g.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fbank_frame_count_formula(n in 400usize..5000) {
        let f = fbank(&random_wave(n, n as u64, 0.2), &FbankConfig::default()).unwrap();
        prop_assert_eq!(f.rows(), 1 + (n - 400) / 160);
    }
}
