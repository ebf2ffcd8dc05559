use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] WavError),

    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),

    #[error("archive: {0}")]
    Archive(#[from] ArchiveError),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("unsupported encoding: format tag {format}, {bits} bits per sample (need 16-bit PCM)")]
    UnsupportedEncoding { format: u16, bits: u16 },
    #[error("expected 1 channel, found {0}")]
    ChannelCount(u16),
    #[error("expected 16000 Hz, found {0} Hz")]
    SampleRate(u32),
    #[error("sample {index} = {value} outside [-1.0001, 1.0001]")]
    OutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{file}:{line}: malformed line {text:?}")]
    Malformed {
        file: String,
        line: usize,
        text: String,
    },
    #[error("{file}: duplicate id {id}")]
    Duplicate { file: String, id: String },
    #[error("utterance {id} appears in {present} but not in {missing}")]
    Dangling {
        id: String,
        present: String,
        missing: String,
    },
    #[error("{file}: label {value:?} for {id} is not 0 or 1")]
    BadLabel {
        file: String,
        id: String,
        value: String,
    },
    #[error("spk2utt disagrees with utt2spk for {0}")]
    Spk2UttMismatch(String),
    #[error("class {label} has {available} utterances, plan needs at least {needed}")]
    ClassTooSmall {
        label: u8,
        available: usize,
        needed: usize,
    },
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: bad magic")]
    BadMagic { path: PathBuf },
    #[error("{path}@{offset}: expected record {expected}, found {found}")]
    IdMismatch {
        path: PathBuf,
        offset: u64,
        expected: String,
        found: String,
    },
    #[error("{path}@{offset}: truncated record")]
    Truncated { path: PathBuf, offset: u64 },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("record {0} is empty")]
    Empty(String),
    #[error("malformed index line {0:?}")]
    BadIndexLine(String),
    #[error("record {0} not found")]
    Missing(String),
}
