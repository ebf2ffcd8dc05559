//! Ensemble end-to-end spoken intent classification: audio I/O, FBank
//! features, augmentation, Kaldi-style data preparation, a small neural
//! network core with hand-written gradients, frozen encoder ensembles, and
//! the training / evaluation / synthetic-data pipeline around them.

pub mod archive;
pub mod audio;
pub mod augment;
pub mod cli;
pub mod config;
pub mod encoders;
pub mod error;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod shard;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
