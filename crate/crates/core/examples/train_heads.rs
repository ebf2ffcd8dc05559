//! Train the max-pooling and attention heads on the same synthetic data and
//! compare them on held-out clips, then localize an event with the
//! max-pooling model.
//!
//! cargo run --release --example train_heads -- [clip_seconds] [train] [test] [epochs]

use ensemble_slu::encoders::EncoderSpec;
use ensemble_slu::metrics::MetricsReport;
use ensemble_slu::model::{Head, SluConfig, SluModel};
use ensemble_slu::synth::{generate_clip, Preset, SynthSpec};
use ensemble_slu::train::{encode_examples, evaluate, predict, Example, TrainConfig, Trainer};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> ensemble_slu::Result<()> {
    let (secs, n_train, n_test, epochs) = (arg(1, 5.0), arg(2, 120), arg(3, 40), arg(4, 3));
    let spec = SynthSpec::preset(Preset::Easy).with_clip_seconds(secs);
    let clip = |seed: u64| generate_clip(seed, (seed % 2) as u8, &spec);

    let mut reports = Vec::new();
    let mut trained = None;
    for head in [Head::Maxpool, Head::Attention] {
        let cfg = SluConfig {
            encoders: vec![
                EncoderSpec::projection("a", 64, 4, 11),
                EncoderSpec::projection("b", 16, 4, 12).with_bins(0, 40),
            ],
            hidden: 64,
            head,
            ..SluConfig::default()
        };
        let model = SluModel::new(cfg, 1)?;
        let examples = |range: std::ops::Range<u64>| -> ensemble_slu::Result<Vec<Example>> {
            range
                .map(|s| {
                    let (w, _) = clip(s)?;
                    Ok(Example { utt_id: format!("c{s}"), features: model.features(&w)?, label: (s % 2) as usize })
                })
                .collect()
        };
        let train = encode_examples(&model, &examples(0..n_train)?)?;
        let test = encode_examples(&model, &examples(10_000..10_000 + n_test)?)?;
        let mut trainer = Trainer::new(model, TrainConfig { epochs, seed: 1, ..TrainConfig::default() })?;
        trainer.fit_with(&train, None, |s| {
            println!("{head:>9} epoch {}  loss {:.4}  train F1 {:.3}", s.epoch + 1, s.mean_loss, s.train_f1)
        })?;
        reports.push((format!("{head} head"), evaluate(trainer.model(), &test)?.report()));
        if head == Head::Maxpool {
            trained = Some(trainer.into_model());
        }
    }
    let rows: Vec<(&str, &MetricsReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    print!("{}", MetricsReport::table(&rows));

    let model = trained.expect("max-pool model");
    let (w, ev) = clip(10_001)?;
    let p = predict(&model, "probe", &w)?;
    println!(
        "probe: label {} (truth 1), event onset {:.2} s, argmax time {:.2} s",
        p.label,
        ev.map_or(f64::NAN, |e| e.onset_s),
        p.event_time_s.unwrap_or(f64::NAN)
    );
    Ok(())
}
