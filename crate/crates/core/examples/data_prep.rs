//! Synthesize a small corpus, then run the Kaldi-style preparation:
//! manifest parse, class-balanced sharding and feature archives.

use ensemble_slu::archive::{read_feature, read_index};
use ensemble_slu::manifest::parse_manifest_dir;
use ensemble_slu::pipeline::{prepare, AugmentMode, PrepareOptions, TEST_SCP, TRAIN_SCP};
use ensemble_slu::shard::{shard_dataset, ShardPlan};
use ensemble_slu::synth::{generate_dataset, Preset, SynthSpec};

fn main() -> ensemble_slu::Result<()> {
    let root = std::env::temp_dir().join("ensemble_slu_data_prep");
    let _ = std::fs::remove_dir_all(&root);
    let data = root.join("data");
    let spec = SynthSpec::preset(Preset::Easy).with_clip_seconds(2.5);
    let s = generate_dataset(40, &spec, &data, 3)?;
    println!("corpus: {} positive / {} negative in {}", s.positives, s.negatives, data.display());

    let m = parse_manifest_dir(&data)?;
    let plan = ShardPlan { shards_per_class: 4, train_shards: 3, test_shards: 1, ..ShardPlan::default() };
    let a = shard_dataset(&m, &plan)?;
    for label in [1u8, 0] {
        let sizes: Vec<usize> = (0..4).map(|k| a.members(label, k).len()).collect();
        println!("label {label} shard sizes {sizes:?}");
    }

    let opts = PrepareOptions { plan, augment: AugmentMode::Both, ..PrepareOptions::default() };
    let p = prepare(&data, root.join("feats"), &opts)?;
    println!("{} archives, {} train / {} test", p.archives, p.train_utts, p.test_utts);
    let test = read_index(root.join("feats").join(TEST_SCP))?;
    let f = read_feature(&test[0])?;
    println!("{} -> {}x{} features at byte {}", test[0].utt_id, f.rows(), f.dim(), test[0].byte_offset);
    println!("train index: {} entries", read_index(root.join("feats").join(TRAIN_SCP))?.len());
    Ok(())
}
