//! Storage formats, manifests, sharding and the prepare stage end to end.

use std::collections::BTreeSet;
use std::path::PathBuf;

use ensemble_slu::archive::{read_archive, read_feature, read_index, write_feature_archive};
use ensemble_slu::audio::{write_wav, Waveform, SAMPLE_RATE};
use ensemble_slu::features::FeatureMatrix;
use ensemble_slu::manifest::{parse_manifest_dir, write_manifest_dir, Manifest, UtteranceRecord};
use ensemble_slu::shard::{shard_dataset, ShardPlan};
use ensemble_slu::synth::{generate_dataset, positive_count, read_events, Preset, SynthSpec};
use proptest::prelude::*;

fn f32_matrix() -> impl Strategy<Value = FeatureMatrix> {
    (1usize..12, 1usize..10).prop_flat_map(|(r, d)| {
        prop::collection::vec(-1e6f32..1e6, r * d).prop_map(move |v| {
            FeatureMatrix::new(v.into_iter().map(f64::from).collect(), r, d, 10.0).unwrap()
        })
    })
}

fn manifest_of(n_pos: usize, n_neg: usize, speakers: usize) -> Manifest {
    let records = (0..n_pos + n_neg)
        .map(|i| UtteranceRecord {
            utt_id: format!("utt{i:05}"),
            wav_path: PathBuf::from(format!("wav/utt{i:05}.wav")),
            speaker_id: format!("spk{:02}", i % speakers),
            label: u8::from(i < n_pos),
        })
        .collect();
    Manifest::new(records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn archive_round_trip_is_bit_exact(mats in prop::collection::vec(f32_matrix(), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<(String, FeatureMatrix)> =
            mats.into_iter().enumerate().map(|(i, m)| (format!("u{i}"), m)).collect();
        let ark = dir.path().join("a.fark");
        let scp = dir.path().join("a.scp");
        let index = write_feature_archive(&items, &ark, &scp).unwrap();
        prop_assert_eq!(read_index(&scp).unwrap(), index.clone());
        for ((id, m), e) in items.iter().zip(&index) {
            let back = read_feature(e).unwrap();
            prop_assert_eq!(&e.utt_id, id);
            let a: Vec<u64> = m.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!((back.rows(), back.dim()), (m.rows(), m.dim()));
        }
        prop_assert_eq!(read_archive(&ark).unwrap(), items);
    }

    #[test]
    fn manifest_write_parse_identity(n_pos in 1usize..20, n_neg in 1usize..20, spk in 1usize..6) {
        let m = manifest_of(n_pos, n_neg, spk);
        let dir = tempfile::tempdir().unwrap();
        write_manifest_dir(&m, dir.path()).unwrap();
        prop_assert_eq!(parse_manifest_dir(dir.path()).unwrap(), m);
    }

    #[test]
    fn shards_partition_each_class(n_pos in 32usize..200, n_neg in 32usize..200, seed in any::<u64>()) {
        let m = manifest_of(n_pos, n_neg, 7);
        let plan = ShardPlan { seed, ..ShardPlan::default() };
        let a = shard_dataset(&m, &plan).unwrap();
        prop_assert_eq!(a.slots.len(), m.len());
        prop_assert!(a.train.is_disjoint(&a.test));
        prop_assert_eq!(a.train.len() + a.test.len(), m.len());
        for label in [0u8, 1] {
            let sizes: Vec<usize> = (0..32).map(|s| a.members(label, s).len()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), if label == 1 { n_pos } else { n_neg });
        }
        for (id, slot) in &a.slots {
            prop_assert_eq!(m.get(id).unwrap().label, slot.label);
            prop_assert_eq!(a.train.contains(id), slot.shard < 30);
            prop_assert_eq!(a.test.contains(id), slot.shard >= 30);
        }
    }
}

#[test]
fn speaker_disjoint_keeps_speakers_on_one_side() {
    let m = manifest_of(100, 100, 40);
    let plan = ShardPlan {
        speaker_disjoint: true,
        ..ShardPlan::default()
    };
    let a = shard_dataset(&m, &plan).unwrap();
    let spk = |ids: &BTreeSet<String>| -> BTreeSet<String> {
        ids.iter().map(|id| m.get(id).unwrap().speaker_id.clone()).collect()
    };
    assert!(spk(&a.train).is_disjoint(&spk(&a.test)));
    assert_eq!(a.train.len() + a.test.len(), 200);
}

#[test]
fn synth_directory_parses() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::preset(Preset::Easy).with_clip_seconds(2.5);
    let s = generate_dataset(23, &spec, dir.path(), 4).unwrap();
    assert_eq!(s.positives, positive_count(23, spec.positive_fraction));
    let m = parse_manifest_dir(dir.path()).unwrap();
    assert_eq!(m.len(), 23);
    assert_eq!(m.records().iter().filter(|r| r.label == 1).count(), s.positives);
    let events: std::collections::BTreeMap<_, _> =
        read_events(dir.path().join("events.gt")).unwrap().into_iter().collect();
    for r in m.records() {
        assert_eq!(events[&r.utt_id].is_some(), r.label == 1, "{}", r.utt_id);
    }
}

#[test]
fn cli_prepare_writes_one_archive_per_shard() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(data.join("wav")).unwrap();
    let m = manifest_of(64, 64, 8);
    for (i, r) in m.records().iter().enumerate() {
        let s: Vec<f64> = (0..1600).map(|k| ((k * (i + 3)) as f64 * 0.01).sin() * 0.3).collect();
        write_wav(&Waveform::new(s, SAMPLE_RATE).unwrap(), data.join(&r.wav_path)).unwrap();
    }
    write_manifest_dir(&m, &data).unwrap();
    let out = dir.path().join("feats");
    let mut o = Vec::new();
    let mut e = Vec::new();
    let code = ensemble_slu::cli::run(
        ["slu", "prepare", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &mut o,
        &mut e,
    );
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&e));
    assert_eq!(String::from_utf8(o).unwrap().trim(), "64 archives, 120 train / 8 test utterances");
    let arks = std::fs::read_dir(out.join("ark"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "fark"))
        .count();
    assert_eq!(arks, 64);
    assert_eq!(read_index(out.join("train.scp")).unwrap().len(), 120);
    assert_eq!(read_index(out.join("test.scp")).unwrap().len(), 8);

    // a second run refuses to clobber
    let code = ensemble_slu::cli::run(
        ["slu", "prepare", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &mut Vec::new(),
        &mut Vec::new(),
    );
    assert_eq!(code, 2);
}
