//! Write a tone to a 16-bit mono WAV, read it back, and show the
//! quantization error.

use ensemble_slu::audio::{read_wav, write_wav, Waveform, SAMPLE_RATE};

fn main() -> ensemble_slu::Result<()> {
    let tone: Vec<f64> = (0..SAMPLE_RATE as usize)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    let w = Waveform::new(tone, SAMPLE_RATE)?;
    let path = std::env::temp_dir().join("ensemble_slu_tone.wav");
    write_wav(&w, &path)?;
    let back = read_wav(&path)?;
    let err = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{}: {:.2} s, peak {:.4}", path.display(), back.duration_secs(), back.peak());
    println!("max quantization error {err:.2e} (bound {:.2e})", 1.0 / 32768.0);
    Ok(())
}
