//! Generate clips from both presets and report where the events sit.

use ensemble_slu::synth::{generate_clip, Preset, SynthSpec};

fn main() -> ensemble_slu::Result<()> {
    for preset in [Preset::Easy, Preset::Hard] {
        let spec = SynthSpec::preset(preset);
        println!("{preset:?}: {:.0} s clips, event SNR {:?} dB, distractors {:?} at {:?} Hz",
            spec.clip_seconds, spec.event_snr_db, spec.distractor_count, spec.distractor_hz);
        for seed in 0..3 {
            for label in [1u8, 0] {
                let (w, ev) = generate_clip(seed, label, &spec)?;
                let what = match ev {
                    Some(e) => format!("event at {:.2} s for {:.2} s", e.onset_s, e.duration_s),
                    None => "no event".into(),
                };
                println!("  seed {seed} label {label}: rms {:.4}, peak {:.3}, {what}", w.power().sqrt(), w.peak());
            }
        }
    }
    Ok(())
}
