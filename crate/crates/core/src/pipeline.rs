//! Data preparation: manifests to sharded feature archives, and loading the
//! resulting train/test lists back as labelled examples.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archive::{read_feature, read_index, write_feature_archive, write_index, ArchiveIndexEntry};
use crate::audio::{read_wav, Waveform};
use crate::augment::{add_noise_at_snr, reverberate, RoomImpulseResponse};
use crate::config::AugmentConfig;
use crate::error::{Error, Result};
use crate::features::{mean_normalize, FbankConfig, FbankExtractor};
use crate::manifest::{parse_manifest_dir, read_labels, Manifest, LABELS};
use crate::shard::{shard_dataset, ShardPlan};
use crate::synth::EVENTS_GT;
use crate::train::Example;

pub const TRAIN_SCP: &str = "train.scp";
pub const TEST_SCP: &str = "test.scp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AugmentMode {
    #[default]
    None,
    Noise,
    Reverb,
    Both,
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "noise" => Ok(Self::Noise),
            "reverb" => Ok(Self::Reverb),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown augmentation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrepareOptions {
    pub plan: ShardPlan,
    pub fbank: FbankConfig,
    pub augment: AugmentMode,
    pub augment_config: AugmentConfig,
    /// Overwrite an existing, non-empty output directory.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub archives: usize,
    pub train_utts: usize,
    pub test_utts: usize,
}

/// Resolves a manifest wave path against the manifest directory.
pub fn resolve_wav(dir: &Path, wav: &Path) -> PathBuf {
    if wav.is_absolute() {
        wav.to_path_buf()
    } else {
        dir.join(wav)
    }
}

fn utt_seed(seed: u64, utt: &str) -> u64 {
    let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
    for b in utt.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn augment(w: Waveform, utt: &str, mode: AugmentMode, cfg: &AugmentConfig, seed: u64) -> Result<Waveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(utt_seed(seed, utt));
    let mut w = w;
    if matches!(mode, AugmentMode::Reverb | AugmentMode::Both) {
        let rt60 = rng.gen_range(cfg.rt60_s[0]..=cfg.rt60_s[1]);
        w = reverberate(&w, &RoomImpulseResponse::synthetic(rt60, rng.gen())?)?;
    }
    if matches!(mode, AugmentMode::Noise | AugmentMode::Both) && w.power() > 0.0 {
        let noise: Vec<f64> = (0..w.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let noise = Waveform::new(noise, w.sample_rate())?;
        let snr = rng.gen_range(cfg.noise_snr_db[0]..=cfg.noise_snr_db[1]);
        w = add_noise_at_snr(&w, &noise, snr, rng.gen())?;
    }
    Ok(w)
}

fn claim_output(out: &Path, force: bool) -> Result<()> {
    let occupied = out
        .read_dir()
        .map(|mut d| d.next().is_some())
        .unwrap_or(false);
    if occupied && !force {
        return Err(Error::io(
            out,
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output exists; pass --force to overwrite"),
        ));
    }
    let ark = out.join("ark");
    if ark.exists() {
        fs::remove_dir_all(&ark).map_err(|e| Error::io(&ark, e))?;
    }
    fs::create_dir_all(&ark).map_err(|e| Error::io(&ark, e))
}

/// Parses the manifest in `data_dir`, extracts features (augmenting train
/// shards when asked) and writes one archive per (class, shard) plus
/// `train.scp`, `test.scp` and a copy of `labels`.
pub fn prepare(data_dir: impl AsRef<Path>, out_dir: impl AsRef<Path>, opts: &PrepareOptions) -> Result<PrepareSummary> {
    let data_dir = data_dir.as_ref();
    let out = out_dir.as_ref();
    opts.plan.validate()?;
    opts.augment_config.validate()?;
    let extractor = FbankExtractor::new(&opts.fbank)?;
    let manifest = parse_manifest_dir(data_dir)?;
    let assignment = shard_dataset(&manifest, &opts.plan)?;
    claim_output(out, opts.force)?;
    let out = out.canonicalize().map_err(|e| Error::io(out, e))?;

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut archives = 0;
    for label in [1u8, 0u8] {
        let prefix = if label == 1 { "pos" } else { "neg" };
        for shard in 0..opts.plan.shards_per_class {
            let is_train = opts.plan.is_train(shard);
            let mut feats = Vec::new();
            for utt in assignment.members(label, shard) {
                let rec = manifest.get(utt).expect("assigned utterances exist");
                let mut w = read_wav(resolve_wav(data_dir, &rec.wav_path))?;
                if is_train && opts.augment != AugmentMode::None {
                    w = augment(w, utt, opts.augment, &opts.augment_config, opts.plan.seed)?;
                }
                feats.push((utt.to_string(), extractor.extract(&w)?));
            }
            let base = out.join("ark").join(format!("{prefix}_{shard:02}"));
            let index = write_feature_archive(&feats, base.with_extension("fark"), base.with_extension("scp"))?;
            archives += 1;
            if is_train {
                train.extend(index);
            } else {
                test.extend(index);
            }
        }
    }
    let sort = |v: &mut Vec<ArchiveIndexEntry>| v.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    sort(&mut train);
    sort(&mut test);
    write_index(&train, out.join(TRAIN_SCP))?;
    write_index(&test, out.join(TEST_SCP))?;
    copy_labels(&manifest, &out)?;
    let gt = data_dir.join(EVENTS_GT);
    if gt.exists() {
        fs::copy(&gt, out.join(EVENTS_GT)).map_err(|e| Error::io(&gt, e))?;
    }
    Ok(PrepareSummary {
        archives,
        train_utts: train.len(),
        test_utts: test.len(),
    })
}

fn copy_labels(m: &Manifest, out: &Path) -> Result<()> {
    let text: String = m.records().iter().map(|r| format!("{} {}\n", r.utt_id, r.label)).collect();
    let path = out.join(LABELS);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Loads every utterance listed in `scp` with its label from `labels`.
pub fn load_examples(scp: impl AsRef<Path>, labels: impl AsRef<Path>, normalize: bool) -> Result<Vec<Example>> {
    let labels = read_labels(labels)?;
    read_index(scp)?
        .iter()
        .map(|entry| {
            let label = *labels
                .get(&entry.utt_id)
                .ok_or_else(|| Error::invalid(format!("{} has no label", entry.utt_id)))?;
            let f = read_feature(entry)?;
            Ok(Example {
                utt_id: entry.utt_id.clone(),
                features: if normalize { mean_normalize(&f) } else { f },
                label: label as usize,
            })
        })
        .collect()
}

/// Train or test split of a prepared feature directory.
pub fn load_split(features_dir: impl AsRef<Path>, train: bool, normalize: bool) -> Result<Vec<Example>> {
    let dir = features_dir.as_ref();
    load_examples(dir.join(if train { TRAIN_SCP } else { TEST_SCP }), dir.join(LABELS), normalize)
}
