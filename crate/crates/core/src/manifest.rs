//! Kaldi-style text manifests: `wav.scp`, `utt2spk`, `spk2utt`, `labels`.
//!
//! `labels` maps each utterance to 0 (normal) or 1 (abnormal) and takes the
//! place of a transcript file, since no transcripts exist for this task.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, ManifestError, Result};

pub const WAV_SCP: &str = "wav.scp";
pub const UTT2SPK: &str = "utt2spk";
pub const SPK2UTT: &str = "spk2utt";
pub const LABELS: &str = "labels";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub wav_path: PathBuf,
    pub speaker_id: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    records: Vec<UtteranceRecord>,
}

impl Manifest {
    /// Sorts by utterance id and checks ids, tokens and labels.
    pub fn new(mut records: Vec<UtteranceRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
        for pair in records.windows(2) {
            if pair[0].utt_id == pair[1].utt_id {
                return Err(ManifestError::Duplicate {
                    file: "manifest".into(),
                    id: pair[0].utt_id.clone(),
                }
                .into());
            }
        }
        for r in &records {
            if !is_token(&r.utt_id) || !is_token(&r.speaker_id) {
                return Err(Error::invalid(format!(
                    "utterance {:?} / speaker {:?} must be nonempty and whitespace-free",
                    r.utt_id, r.speaker_id
                )));
            }
            if r.label > 1 {
                return Err(ManifestError::BadLabel {
                    file: "manifest".into(),
                    id: r.utt_id.clone(),
                    value: r.label.to_string(),
                }
                .into());
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, utt_id: &str) -> Option<&UtteranceRecord> {
        self.records
            .binary_search_by(|r| r.utt_id.as_str().cmp(utt_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn utt2spk(&self) -> BTreeMap<String, String> {
        self.records
            .iter()
            .map(|r| (r.utt_id.clone(), r.speaker_id.clone()))
            .collect()
    }

    pub fn spk2utt(&self) -> BTreeMap<String, Vec<String>> {
        spk2utt_from_utt2spk(&self.utt2spk())
    }
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

pub fn spk2utt_from_utt2spk(utt2spk: &BTreeMap<String, String>) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (utt, spk) in utt2spk {
        out.entry(spk.clone()).or_default().push(utt.clone());
    }
    out
}

pub fn utt2spk_from_spk2utt(spk2utt: &BTreeMap<String, Vec<String>>) -> BTreeMap<String, String> {
    spk2utt
        .iter()
        .flat_map(|(spk, utts)| utts.iter().map(move |u| (u.clone(), spk.clone())))
        .collect()
}

fn read_text(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

/// Parses "id value" lines into an ordered map, rejecting duplicates.
fn parse_pairs(text: &str, file: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(ManifestError::Malformed {
                file: file.into(),
                line: i + 1,
                text: line.into(),
            }
            .into());
        }
        if out.insert(fields[0].to_string(), fields[1].to_string()).is_some() {
            return Err(ManifestError::Duplicate {
                file: file.into(),
                id: fields[0].into(),
            }
            .into());
        }
    }
    Ok(out)
}

fn parse_spk2utt(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let spk = fields.next().unwrap().to_string();
        let mut utts: Vec<String> = fields.map(str::to_string).collect();
        if utts.is_empty() {
            return Err(ManifestError::Malformed {
                file: SPK2UTT.into(),
                line: i + 1,
                text: line.into(),
            }
            .into());
        }
        utts.sort();
        if out.insert(spk.clone(), utts).is_some() {
            return Err(ManifestError::Duplicate {
                file: SPK2UTT.into(),
                id: spk,
            }
            .into());
        }
    }
    Ok(out)
}

fn check_same_keys(
    a: &BTreeMap<String, String>,
    a_name: &str,
    b: &BTreeMap<String, String>,
    b_name: &str,
) -> Result<()> {
    let dangling = |id: &String, present: &str, missing: &str| {
        Error::from(ManifestError::Dangling {
            id: id.clone(),
            present: present.into(),
            missing: missing.into(),
        })
    };
    if let Some(id) = a.keys().find(|k| !b.contains_key(*k)) {
        return Err(dangling(id, a_name, b_name));
    }
    if let Some(id) = b.keys().find(|k| !a.contains_key(*k)) {
        return Err(dangling(id, b_name, a_name));
    }
    Ok(())
}

pub fn parse_manifest_dir(dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let wav = parse_pairs(&read_text(dir, WAV_SCP)?, WAV_SCP)?;
    let u2s = parse_pairs(&read_text(dir, UTT2SPK)?, UTT2SPK)?;
    let labels = parse_pairs(&read_text(dir, LABELS)?, LABELS)?;
    check_same_keys(&wav, WAV_SCP, &u2s, UTT2SPK)?;
    check_same_keys(&wav, WAV_SCP, &labels, LABELS)?;

    if dir.join(SPK2UTT).exists() {
        let s2u = parse_spk2utt(&read_text(dir, SPK2UTT)?)?;
        let mut seen = BTreeSet::new();
        for utts in s2u.values() {
            for u in utts {
                if !seen.insert(u.clone()) {
                    return Err(ManifestError::Duplicate {
                        file: SPK2UTT.into(),
                        id: u.clone(),
                    }
                    .into());
                }
            }
        }
        let derived = spk2utt_from_utt2spk(&u2s);
        if derived != s2u {
            let culprit = s2u
                .keys()
                .chain(derived.keys())
                .find(|k| s2u.get(*k) != derived.get(*k))
                .cloned()
                .unwrap_or_default();
            return Err(ManifestError::Spk2UttMismatch(culprit).into());
        }
    }

    let mut records = Vec::with_capacity(wav.len());
    for (utt, path) in wav {
        let label = match labels[&utt].as_str() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(ManifestError::BadLabel {
                    file: LABELS.into(),
                    id: utt,
                    value: other.into(),
                }
                .into())
            }
        };
        records.push(UtteranceRecord {
            speaker_id: u2s[&utt].clone(),
            wav_path: PathBuf::from(path),
            utt_id: utt,
            label,
        });
    }
    Manifest::new(records)
}

pub fn write_manifest_dir(m: &Manifest, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut wav = String::new();
    let mut u2s = String::new();
    let mut labels = String::new();
    for r in &m.records {
        wav.push_str(&format!("{} {}\n", r.utt_id, r.wav_path.display()));
        u2s.push_str(&format!("{} {}\n", r.utt_id, r.speaker_id));
        labels.push_str(&format!("{} {}\n", r.utt_id, r.label));
    }
    let mut s2u = String::new();
    for (spk, utts) in m.spk2utt() {
        s2u.push_str(&spk);
        for u in utts {
            s2u.push(' ');
            s2u.push_str(&u);
        }
        s2u.push('\n');
    }
    for (name, body) in [(WAV_SCP, wav), (UTT2SPK, u2s), (SPK2UTT, s2u), (LABELS, labels)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads a plain `labels` file into a map.
pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, u8>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, LABELS)?
        .into_iter()
        .map(|(id, v)| match v.as_str() {
            "0" => Ok((id, 0)),
            "1" => Ok((id, 1)),
            _ => Err(ManifestError::BadLabel {
                file: LABELS.into(),
                id,
                value: v,
            }
            .into()),
        })
        .collect()
}
