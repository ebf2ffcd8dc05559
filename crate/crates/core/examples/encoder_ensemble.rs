//! Two frozen encoders at different strides over the same features, and
//! their frame-aligned concatenation.

use ensemble_slu::encoders::{align_and_concat, EncoderSpec, FrozenEncoder};
use ensemble_slu::features::{fbank, FbankConfig};
use ensemble_slu::synth::{generate_clip, Preset, SynthSpec};

fn main() -> ensemble_slu::Result<()> {
    let spec = SynthSpec::preset(Preset::Hard).with_clip_seconds(3.0);
    let (w, ev) = generate_clip(4, 1, &spec)?;
    let feats = fbank(&w, &FbankConfig::default())?;
    println!("features {}x{}, event {:?}", feats.rows(), feats.dim(), ev);

    let full = FrozenEncoder::new(EncoderSpec::projection("full", 64, 2, 11), feats.dim())?;
    let band = FrozenEncoder::new(EncoderSpec::recurrent("band", 16, 4, 12).with_bins(0, 40), feats.dim())?;
    let a = full.encode("x", &feats)?;
    let b = band.encode("x", &feats)?;
    println!("full-band projection: {} steps x {} (stride {})", a.rows(), a.dim(), a.stride);
    println!("band-limited LSTM:    {} steps x {} (stride {})", b.rows(), b.dim(), b.stride);
    let joint = align_and_concat(&[a, b])?;
    println!("aligned ensemble:     {} steps x {} (stride {})", joint.rows(), joint.dim(), joint.stride);
    Ok(())
}
