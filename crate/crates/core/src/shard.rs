//! Per-class sharding of a manifest into train and test archives.
//!
//! Within each class the utterances are shuffled by seed and dealt
//! round-robin into `shards_per_class` shards; the first `train_shards`
//! shards form the training set and the rest the test set.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ManifestError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShardPlan {
    pub shards_per_class: usize,
    pub train_shards: usize,
    pub test_shards: usize,
    pub seed: u64,
    /// Deal whole speakers instead of utterances, so no speaker spans the
    /// train/test boundary. Shard sizes are then no longer balanced.
    pub speaker_disjoint: bool,
}

impl Default for ShardPlan {
    fn default() -> Self {
        Self {
            shards_per_class: 32,
            train_shards: 30,
            test_shards: 2,
            seed: 0,
            speaker_disjoint: false,
        }
    }
}

impl ShardPlan {
    pub fn validate(&self) -> Result<()> {
        if self.train_shards == 0 || self.test_shards == 0 {
            return Err(Error::Config("train_shards and test_shards must be positive".into()));
        }
        if self.train_shards + self.test_shards != self.shards_per_class {
            return Err(Error::Config(format!(
                "train_shards {} + test_shards {} != shards_per_class {}",
                self.train_shards, self.test_shards, self.shards_per_class
            )));
        }
        Ok(())
    }

    pub fn is_train(&self, shard: usize) -> bool {
        shard < self.train_shards
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardSlot {
    pub label: u8,
    pub shard: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardAssignment {
    pub slots: BTreeMap<String, ShardSlot>,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl ShardAssignment {
    /// Utterance ids in (label, shard) in manifest order.
    pub fn members(&self, label: u8, shard: usize) -> Vec<&str> {
        self.slots
            .iter()
            .filter(|(_, s)| s.label == label && s.shard == shard)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

fn class_seed(seed: u64, label: u8) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (label as u64 + 1)
}

pub fn shard_dataset(m: &Manifest, plan: &ShardPlan) -> Result<ShardAssignment> {
    plan.validate()?;
    let mut slots = BTreeMap::new();

    if plan.speaker_disjoint {
        let mut speakers: Vec<&str> = m
            .records()
            .iter()
            .map(|r| r.speaker_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if speakers.len() < plan.shards_per_class {
            return Err(Error::invalid(format!(
                "{} speakers cannot fill {} shards",
                speakers.len(),
                plan.shards_per_class
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        speakers.shuffle(&mut rng);
        let shard_of: BTreeMap<&str, usize> = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i % plan.shards_per_class))
            .collect();
        for label in [0u8, 1] {
            let n = m.records().iter().filter(|r| r.label == label).count();
            if n == 0 {
                return Err(ManifestError::ClassTooSmall {
                    label,
                    available: 0,
                    needed: 1,
                }
                .into());
            }
        }
        for r in m.records() {
            slots.insert(
                r.utt_id.clone(),
                ShardSlot {
                    label: r.label,
                    shard: shard_of[r.speaker_id.as_str()],
                },
            );
        }
    } else {
        for label in [0u8, 1] {
            let mut ids: Vec<&str> = m
                .records()
                .iter()
                .filter(|r| r.label == label)
                .map(|r| r.utt_id.as_str())
                .collect();
            if ids.len() < plan.shards_per_class {
                return Err(ManifestError::ClassTooSmall {
                    label,
                    available: ids.len(),
                    needed: plan.shards_per_class,
                }
                .into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(class_seed(plan.seed, label));
            ids.shuffle(&mut rng);
            for (i, id) in ids.into_iter().enumerate() {
                slots.insert(
                    id.to_string(),
                    ShardSlot {
                        label,
                        shard: i % plan.shards_per_class,
                    },
                );
            }
        }
    }

    let (train, test) = slots
        .iter()
        .map(|(id, s)| (id.clone(), plan.is_train(s.shard)))
        .partition::<Vec<_>, _>(|(_, is_train)| *is_train);
    Ok(ShardAssignment {
        slots,
        train: train.into_iter().map(|(id, _)| id).collect(),
        test: test.into_iter().map(|(id, _)| id).collect(),
    })
}
