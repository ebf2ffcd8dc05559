//! Additive noise at a target SNR and synthetic room reverberation.

use ensemble_slu::audio::{Waveform, SAMPLE_RATE};
use ensemble_slu::augment::{add_noise_at_snr, mix_noise, reverberate, RoomImpulseResponse};
use ensemble_slu::synth::{generate_clip, Preset, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ensemble_slu::Result<()> {
    let spec = SynthSpec::preset(Preset::Easy).with_clip_seconds(3.0);
    let (clean, _) = generate_clip(7, 1, &spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Waveform::new((0..8000).map(|_| rng.gen_range(-1.0..1.0)).collect(), SAMPLE_RATE)?;

    for snr in [20.0, 10.0, 0.0] {
        let mixed = mix_noise(&clean, &noise, snr, 3)?;
        let p_n = clean.samples().iter().zip(&mixed).map(|(c, m)| (m - c).powi(2)).sum::<f64>() / mixed.len() as f64;
        let out = add_noise_at_snr(&clean, &noise, snr, 3)?;
        println!("snr {snr:>5.1} dB -> measured {:>8.4} dB, output peak {:.3}", 10.0 * (clean.power() / p_n).log10(), out.peak());
    }

    for rt60 in [0.2, 0.4, 0.6] {
        let rir = RoomImpulseResponse::synthetic(rt60, 5)?;
        let wet = reverberate(&clean, &rir)?;
        println!("rt60 {rt60:.1} s: {} taps, power {:.5} -> {:.5}", rir.taps().len(), clean.power(), wet.power());
    }
    Ok(())
}
