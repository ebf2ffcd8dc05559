//! Mono 16 kHz PCM audio: the `Waveform` type and a strict RIFF/WAVE codec.
//!
//! Only 16-bit signed PCM, one channel, is accepted on read, and the reader
//! refuses anything that is not 16000 Hz. There is no resampling or downmix.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result, WavError};

pub const SAMPLE_RATE: u32 = 16_000;

/// Largest magnitude `write_wav` tolerates before treating a sample as a bug.
const WRITE_LIMIT: f64 = 1.0001;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform has no samples"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    pub(crate) fn require_rate(&self, op: &str) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!(
                "{op} requires {SAMPLE_RATE} Hz input, got {} Hz",
                self.sample_rate
            )));
        }
        Ok(())
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

/// Converts an amplitude to a 16-bit PCM code.
///
/// Scaling is by 32768 with round-half-away-from-zero, saturated to the i16
/// range, so `pcm / 32768` always maps back to the same code.
pub fn quantize(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn dequantize(pcm: i16) -> f64 {
    pcm as f64 / 32768.0
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Decodes an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    let malformed = |m: &str| Error::Wav(WavError::Malformed(m.to_string()));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE header"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| malformed("chunk extends past end of file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                let format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    if format != 1 || bits != 16 {
        return Err(WavError::UnsupportedEncoding { format, bits }.into());
    }
    if channels != 1 {
        return Err(WavError::ChannelCount(channels).into());
    }
    if rate != SAMPLE_RATE {
        return Err(WavError::SampleRate(rate).into());
    }
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(malformed("data chunk has odd byte count"));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| dequantize(i16::from_le_bytes([b[0], b[1]])))
        .collect();
    if samples.is_empty() {
        return Err(malformed("data chunk is empty"));
    }
    Waveform::new(samples, rate)
}

pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(w)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes a waveform as a canonical 44-byte-header PCM WAV image.
pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>> {
    if let Some((index, &value)) = w
        .samples
        .iter()
        .enumerate()
        .find(|(_, s)| s.abs() > WRITE_LIMIT)
    {
        return Err(WavError::OutOfRange { index, value }.into());
    }
    let data_len = (w.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(format: u16, channels: u16, rate: u32, bits: u16, pcm: &[i16]) -> Vec<u8> {
        let data_len = (pcm.len() * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for p in pcm {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    #[test]
    fn one_second_of_zeros() {
        let w = decode_wav(&wav_bytes(1, 1, 16000, 16, &vec![0; 16000])).unwrap();
        assert_eq!(w.len(), 16000);
        assert_eq!(w.sample_rate(), 16000);
        assert!(w.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm_half_scale() {
        let w = decode_wav(&wav_bytes(1, 1, 16000, 16, &[16384])).unwrap();
        assert_eq!(w.samples(), &[0.5]);
    }

    #[test]
    fn rejects_wrong_contracts() {
        assert!(matches!(
            decode_wav(&wav_bytes(1, 2, 16000, 16, &[0, 0])),
            Err(Error::Wav(WavError::ChannelCount(2)))
        ));
        assert!(matches!(
            decode_wav(&wav_bytes(1, 1, 44100, 16, &[0])),
            Err(Error::Wav(WavError::SampleRate(44100)))
        ));
        assert!(matches!(
            decode_wav(&wav_bytes(3, 1, 16000, 32, &[0, 0])),
            Err(Error::Wav(WavError::UnsupportedEncoding { .. }))
        ));
        assert!(matches!(
            decode_wav(b"RIFX0000WAVE"),
            Err(Error::Wav(WavError::Malformed(_)))
        ));
        let mut truncated = wav_bytes(1, 1, 16000, 16, &[1, 2, 3]);
        truncated.truncate(truncated.len() - 1);
        assert!(decode_wav(&truncated).is_err());
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut bytes = wav_bytes(1, 1, 16000, 16, &[100, -100]);
        // splice a LIST chunk with odd size (padded) between fmt and data
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), b"abc", &[0u8]].concat();
        bytes.splice(36..36, list);
        let w = decode_wav(&bytes).unwrap();
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn quantization_bounds() {
        assert_eq!(quantize(1.0), 32767);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(-1.0), -32768);
        assert_eq!(quantize(0.5), 16384);
        // half-away-from-zero
        assert_eq!(quantize(0.5 / 32768.0), 1);
        assert_eq!(quantize(-0.5 / 32768.0), -1);
    }

    #[test]
    fn write_rejects_out_of_range() {
        let w = Waveform::new(vec![0.0, 1.01], 16000).unwrap();
        assert!(matches!(
            encode_wav(&w),
            Err(Error::Wav(WavError::OutOfRange { index: 1, .. }))
        ));
        let ok = Waveform::new(vec![1.0001, -1.0001], 16000).unwrap();
        assert!(encode_wav(&ok).is_ok());
    }

    #[test]
    fn waveform_invariants() {
        assert!(Waveform::new(vec![], 16000).is_err());
        assert!(Waveform::new(vec![f64::NAN], 16000).is_err());
        let w = Waveform::new(vec![0.0; 240_000], 16000).unwrap();
        assert_eq!(w.duration_secs(), 15.0);
    }
}
