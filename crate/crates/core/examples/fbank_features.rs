//! 80-dim log mel filterbank features of a rising tone, with the peak
//! filter per frame tracking the pitch.

use ensemble_slu::audio::{Waveform, SAMPLE_RATE};
use ensemble_slu::features::{mean_normalize, FbankConfig, FbankExtractor};

fn main() -> ensemble_slu::Result<()> {
    let sr = SAMPLE_RATE as f64;
    let mut phase = 0.0;
    let sweep: Vec<f64> = (0..SAMPLE_RATE as usize)
        .map(|i| {
            phase += 2.0 * std::f64::consts::PI * (300.0 + 3000.0 * i as f64 / sr) / sr;
            0.4 * phase.sin()
        })
        .collect();
    let cfg = FbankConfig::default();
    let ex = FbankExtractor::new(&cfg)?;
    let feats = ex.extract(&Waveform::new(sweep, SAMPLE_RATE)?)?;
    println!("{} frames x {} mels", feats.rows(), feats.dim());
    let centers = ex.filterbank().centers_hz();
    for t in (0..feats.rows()).step_by(12) {
        let row = feats.row(t);
        let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        println!("t={:>4} ms  peak filter {best:>2} ({:>6.0} Hz)", t * 10, centers[best]);
    }
    let cmn = mean_normalize(&feats);
    println!("after mean normalization, dim 0 mean = {:.1e}", (0..cmn.rows()).map(|t| cmn.get(t, 0)).sum::<f64>() / cmn.rows() as f64);
    Ok(())
}
