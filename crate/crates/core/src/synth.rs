//! Deterministic synthetic corpus: long noisy clips where positives hold one
//! short target event and negatives hold none (optionally steady-tone
//! distractors instead).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::manifest::{write_manifest_dir, Manifest, UtteranceRecord};

pub const EVENTS_GT: &str = "events.gt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Linear sweep 400 to 1600 Hz.
    #[default]
    Chirp,
    /// Three equal-length tones at 600, 900 and 1200 Hz.
    ToneTriad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    #[default]
    Pink,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Easy,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub clip_seconds: f64,
    pub sample_rate: u32,
    pub positive_fraction: f64,
    pub event_duration_s: [f64; 2],
    pub event_kind: EventKind,
    /// Event power over its span relative to background power.
    pub event_snr_db: [f64; 2],
    /// Distractors per negative clip, inclusive range.
    pub distractor_count: [usize; 2],
    pub distractor_hz: [f64; 2],
    pub background: Background,
    pub background_rms: f64,
    pub speakers: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::preset(Preset::Easy)
    }
}

impl SynthSpec {
    pub fn preset(p: Preset) -> Self {
        let easy = Self {
            clip_seconds: 15.0,
            sample_rate: SAMPLE_RATE,
            positive_fraction: 0.4305,
            event_duration_s: [0.5, 2.0],
            event_kind: EventKind::Chirp,
            event_snr_db: [0.0, 15.0],
            distractor_count: [0, 2],
            distractor_hz: [2500.0, 6000.0],
            background: Background::Pink,
            background_rms: 0.05,
            speakers: 8,
        };
        match p {
            Preset::Easy => easy,
            // weaker events and in-band distractors in every negative
            Preset::Hard => Self {
                event_snr_db: [-5.0, 5.0],
                distractor_count: [1, 3],
                distractor_hz: [300.0, 1900.0],
                ..easy
            },
        }
    }

    pub fn with_clip_seconds(mut self, s: f64) -> Self {
        self.clip_seconds = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate != SAMPLE_RATE {
            return bad(format!("sample_rate must be {SAMPLE_RATE}"));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad(format!("positive_fraction {} not in (0, 1)", self.positive_fraction));
        }
        let [d0, d1] = self.event_duration_s;
        if !(d0 > 0.0 && d0 <= d1) {
            return bad(format!("bad event_duration_s {d0}..{d1}"));
        }
        if d1 > self.clip_seconds {
            return bad(format!("event up to {d1} s does not fit a {} s clip", self.clip_seconds));
        }
        let [s0, s1] = self.event_snr_db;
        if !(s0.is_finite() && s1.is_finite() && s0 <= s1) {
            return bad(format!("bad event_snr_db {s0}..{s1}"));
        }
        if self.distractor_count[0] > self.distractor_count[1] {
            return bad("distractor_count range is reversed".into());
        }
        let [h0, h1] = self.distractor_hz;
        if !(h0 > 0.0 && h0 <= h1 && h1 < self.sample_rate as f64 / 2.0) {
            return bad(format!("bad distractor_hz {h0}..{h1}"));
        }
        if !(self.background_rms > 0.0) || self.speakers == 0 {
            return bad("background_rms and speakers must be positive".into());
        }
        Ok(())
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }
}

/// Ground-truth placement of the target event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventInfo {
    pub onset_s: f64,
    pub duration_s: f64,
}

/// Unit-amplitude target event of `n` samples.
pub fn event_template(kind: EventKind, n: usize, rate: u32) -> Vec<f64> {
    let fs = rate as f64;
    let dur = n as f64 / fs;
    let mut out: Vec<f64> = match kind {
        EventKind::Chirp => {
            let (f0, f1) = (400.0, 1600.0);
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    (2.0 * std::f64::consts::PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur))).sin()
                })
                .collect()
        }
        EventKind::ToneTriad => (0..n)
            .map(|i| {
                let f = [600.0, 900.0, 1200.0][(3 * i / n.max(1)).min(2)];
                (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()
            })
            .collect(),
    };
    fade(&mut out, rate);
    out
}

fn tone(freq: f64, n: usize, rate: u32) -> Vec<f64> {
    let mut out: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
        .collect();
    fade(&mut out, rate);
    out
}

/// 10 ms raised-cosine ramps at both ends.
fn fade(x: &mut [f64], rate: u32) {
    let ramp = ((rate as usize) / 100).min(x.len() / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos();
        x[i] *= g;
        let j = x.len() - 1 - i;
        x[j] *= g;
    }
}

fn background(spec: &SynthSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out: Vec<f64> = match spec.background {
        Background::White => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        Background::Pink => {
            // three-pole approximation of a 1/f spectrum
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..n)
                .map(|_| {
                    let w: f64 = rng.gen_range(-1.0..1.0);
                    b0 = 0.99765 * b0 + w * 0.099_046_0;
                    b1 = 0.96300 * b1 + w * 0.296_516_4;
                    b2 = 0.57000 * b2 + w * 1.052_691_3;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
    };
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    for v in &mut out {
        *v *= spec.background_rms / rms;
    }
    out
}

/// Adds `sig` at `start`, scaled so its power over its span sits `snr_db`
/// above `ref_power`.
fn add_at_snr(clip: &mut [f64], sig: &[f64], start: usize, ref_power: f64, snr_db: f64) {
    let p = sig.iter().map(|v| v * v).sum::<f64>() / sig.len() as f64;
    let g = (ref_power * 10f64.powf(snr_db / 10.0) / p).sqrt();
    for (c, s) in clip[start..start + sig.len()].iter_mut().zip(sig) {
        *c += g * s;
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// One clip, deterministic in `(seed, label, spec)`.
pub fn generate_clip(seed: u64, label: u8, spec: &SynthSpec) -> Result<(Waveform, Option<EventInfo>)> {
    spec.validate()?;
    let rate = spec.sample_rate;
    let n = spec.clip_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((label as u64) << 63));
    let mut clip = background(spec, n, &mut rng);
    let p_bg = spec.background_rms * spec.background_rms;
    let mut event = None;
    let place = |rng: &mut ChaCha8Rng| {
        let dur = uniform(rng, spec.event_duration_s);
        let len = ((dur * rate as f64).round() as usize).clamp(1, n);
        let start = rng.gen_range(0..=n - len);
        (start, len)
    };
    if label == 1 {
        let (start, len) = place(&mut rng);
        let snr = uniform(&mut rng, spec.event_snr_db);
        add_at_snr(&mut clip, &event_template(spec.event_kind, len, rate), start, p_bg, snr);
        event = Some(EventInfo {
            onset_s: start as f64 / rate as f64,
            duration_s: len as f64 / rate as f64,
        });
    } else {
        let [k0, k1] = spec.distractor_count;
        for _ in 0..rng.gen_range(k0..=k1) {
            let (start, len) = place(&mut rng);
            let f = uniform(&mut rng, spec.distractor_hz);
            let snr = uniform(&mut rng, spec.event_snr_db);
            add_at_snr(&mut clip, &tone(f, len, rate), start, p_bg, snr);
        }
    }
    let peak = clip.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.99 {
        for v in &mut clip {
            *v *= 0.99 / peak;
        }
    }
    Ok((Waveform::new(clip, rate)?, event))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub dir: PathBuf,
    pub positives: usize,
    pub negatives: usize,
}

/// Exact positive count for a dataset of `n` clips.
pub fn positive_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

fn clip_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

pub fn utt_id(speaker: usize, i: usize) -> String {
    format!("spk{speaker:02}-utt{i:05}")
}

/// Writes `wav/*.wav`, the manifest files and `events.gt` under `out_dir`.
/// Wave paths in `wav.scp` are relative to `out_dir`.
pub fn generate_dataset(n: usize, spec: &SynthSpec, out_dir: impl AsRef<Path>, seed: u64) -> Result<DatasetSummary> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 clips, got {n}")));
    }
    spec.validate()?;
    let out = out_dir.as_ref();
    let wav_dir = out.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let positives = positive_count(n, spec.positive_fraction);
    let mut labels: Vec<u8> = (0..n).map(|i| (i < positives) as u8).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut records = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        let speaker = i % spec.speakers;
        let id = utt_id(speaker, i);
        let (w, ev) = generate_clip(clip_seed(seed, i), label, spec)?;
        let rel = PathBuf::from("wav").join(format!("{id}.wav"));
        write_wav(&w, out.join(&rel))?;
        records.push(UtteranceRecord {
            utt_id: id.clone(),
            wav_path: rel,
            speaker_id: format!("spk{speaker:02}"),
            label,
        });
        events.push((id, ev));
    }
    write_manifest_dir(&Manifest::new(records)?, out)?;
    events.sort_by(|a, b| a.0.cmp(&b.0));
    let mut gt = String::new();
    for (id, ev) in events {
        match ev {
            Some(e) => writeln!(gt, "{id} {:.4} {:.4}", e.onset_s, e.duration_s),
            None => writeln!(gt, "{id} none"),
        }
        .expect("string write");
    }
    let gt_path = out.join(EVENTS_GT);
    fs::write(&gt_path, gt).map_err(|e| Error::io(gt_path, e))?;
    Ok(DatasetSummary {
        dir: out.to_path_buf(),
        positives,
        negatives: n - positives,
    })
}

/// Parses `events.gt`: utterance id to `Some(onset, duration)` or `None`.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<(String, Option<EventInfo>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::invalid(format!("{}: bad line {line:?}", path.display()));
            match f.as_slice() {
                [id, "none"] => Ok((id.to_string(), None)),
                [id, on, dur] => Ok((
                    id.to_string(),
                    Some(EventInfo {
                        onset_s: on.parse().map_err(|_| bad())?,
                        duration_s: dur.parse().map_err(|_| bad())?,
                    }),
                )),
                _ => Err(bad()),
            }
        })
        .collect()
}
