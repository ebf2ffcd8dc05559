//! Binary feature archives (`.fark`) with text `.scp` indexes, and the
//! tensor checkpoint container (`FCKP1`).
//!
//! Archive layout: magic `FARK1\0`, then per record
//! `[u32 id_len][id][u32 rows][u32 cols][f32 frame_shift_ms][rows*cols f32]`,
//! all little-endian, row-major. The index lists `<utt_id> <ark_path>:<offset>`
//! where the offset points at the record's `id_len` field.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{ArchiveError, Error, Result};
use crate::features::FeatureMatrix;

pub const FARK_MAGIC: &[u8; 6] = b"FARK1\0";
pub const FCKP_MAGIC: &[u8; 6] = b"FCKP1\0";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveIndexEntry {
    pub utt_id: String,
    pub archive_path: PathBuf,
    pub byte_offset: u64,
}

impl ArchiveIndexEntry {
    pub fn to_line(&self) -> String {
        format!(
            "{} {}:{}\n",
            self.utt_id,
            self.archive_path.display(),
            self.byte_offset
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = || Error::from(ArchiveError::BadIndexLine(line.to_string()));
        let (id, loc) = line.trim().split_once(char::is_whitespace).ok_or_else(bad)?;
        let (path, offset) = loc.trim().rsplit_once(':').ok_or_else(bad)?;
        Ok(Self {
            utt_id: id.to_string(),
            archive_path: PathBuf::from(path),
            byte_offset: offset.parse().map_err(|_| bad())?,
        })
    }
}

fn encoded_len(id: &str, m: &FeatureMatrix) -> usize {
    4 + id.len() + 4 + 4 + 4 + 4 * m.rows() * m.dim()
}

/// Writes all records to `ark_path` and their index to `scp_path`.
///
/// Values are stored as `f32`; matrices whose entries are already
/// `f32`-representable come back bit-identical.
pub fn write_feature_archive(
    features: &[(String, FeatureMatrix)],
    ark_path: impl AsRef<Path>,
    scp_path: impl AsRef<Path>,
) -> Result<Vec<ArchiveIndexEntry>> {
    let ark_path = ark_path.as_ref();
    let scp_path = scp_path.as_ref();
    let mut seen = HashSet::new();
    for (id, m) in features {
        if !seen.insert(id.as_str()) {
            return Err(ArchiveError::DuplicateId(id.clone()).into());
        }
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("bad record id {id:?}")));
        }
        if m.rows() == 0 || m.dim() == 0 {
            return Err(ArchiveError::Empty(id.clone()).into());
        }
    }

    let file = File::create(ark_path).map_err(|e| Error::io(ark_path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(ark_path, e);
    out.write_all(FARK_MAGIC).map_err(io)?;
    let mut offset = FARK_MAGIC.len() as u64;
    let mut index = Vec::with_capacity(features.len());
    for (id, m) in features {
        let mut rec = Vec::with_capacity(encoded_len(id, m));
        rec.extend_from_slice(&(id.len() as u32).to_le_bytes());
        rec.extend_from_slice(id.as_bytes());
        rec.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        rec.extend_from_slice(&(m.dim() as u32).to_le_bytes());
        rec.extend_from_slice(&(m.frame_shift_ms() as f32).to_le_bytes());
        for &v in m.data() {
            rec.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&rec).map_err(io)?;
        index.push(ArchiveIndexEntry {
            utt_id: id.clone(),
            archive_path: ark_path.to_path_buf(),
            byte_offset: offset,
        });
        offset += rec.len() as u64;
    }
    out.flush().map_err(io)?;

    write_index(&index, scp_path)?;
    Ok(index)
}

pub fn write_index(entries: &[ArchiveIndexEntry], scp_path: impl AsRef<Path>) -> Result<()> {
    let scp_path = scp_path.as_ref();
    let text: String = entries.iter().map(ArchiveIndexEntry::to_line).collect();
    fs::write(scp_path, text).map_err(|e| Error::io(scp_path, e))
}

pub fn read_index(scp_path: impl AsRef<Path>) -> Result<Vec<ArchiveIndexEntry>> {
    let scp_path = scp_path.as_ref();
    let text = fs::read_to_string(scp_path).map_err(|e| Error::io(scp_path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(ArchiveIndexEntry::parse_line)
        .collect()
}

fn read_exact_or_truncated(
    r: &mut impl Read,
    buf: &mut [u8],
    path: &Path,
    offset: u64,
) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => ArchiveError::Truncated {
            path: path.to_path_buf(),
            offset,
        }
        .into(),
        _ => Error::io(path, e),
    })
}

fn read_u32(r: &mut impl Read, path: &Path, offset: u64) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b, path, offset)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_feature(entry: &ArchiveIndexEntry) -> Result<FeatureMatrix> {
    let path = entry.archive_path.as_path();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 6];
    if file.read_exact(&mut magic).is_err() || &magic != FARK_MAGIC {
        return Err(ArchiveError::BadMagic {
            path: path.to_path_buf(),
        }
        .into());
    }
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let offset = entry.byte_offset;
    if offset < FARK_MAGIC.len() as u64 || offset >= len {
        return Err(ArchiveError::Truncated {
            path: path.to_path_buf(),
            offset,
        }
        .into());
    }
    file.seek(SeekFrom::Start(offset))
        .map_err(|e| Error::io(path, e))?;
    let (id, m) = read_record(&mut file, path, offset, len)?;
    if id != entry.utt_id {
        return Err(ArchiveError::IdMismatch {
            path: path.to_path_buf(),
            offset,
            expected: entry.utt_id.clone(),
            found: id,
        }
        .into());
    }
    Ok(m)
}

fn read_record(
    r: &mut impl Read,
    path: &Path,
    offset: u64,
    file_len: u64,
) -> Result<(String, FeatureMatrix)> {
    let truncated = || {
        Error::from(ArchiveError::Truncated {
            path: path.to_path_buf(),
            offset,
        })
    };
    let id_len = read_u32(r, path, offset)? as u64;
    if offset + 4 + id_len > file_len {
        return Err(truncated());
    }
    let mut id = vec![0u8; id_len as usize];
    read_exact_or_truncated(r, &mut id, path, offset)?;
    let id = String::from_utf8(id).map_err(|_| truncated())?;
    let rows = read_u32(r, path, offset)? as usize;
    let cols = read_u32(r, path, offset)? as usize;
    let mut shift = [0u8; 4];
    read_exact_or_truncated(r, &mut shift, path, offset)?;
    let shift = f32::from_le_bytes(shift);
    let n = rows * cols;
    if offset + 16 + id_len + 4 * n as u64 > file_len {
        return Err(truncated());
    }
    let mut raw = vec![0u8; 4 * n];
    read_exact_or_truncated(r, &mut raw, path, offset)?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let m = FeatureMatrix::new(data, rows, cols, shift as f64)?;
    Ok((id, m))
}

/// Reads every record of an archive in file order.
pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<(String, FeatureMatrix)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 6 || &bytes[..6] != FARK_MAGIC {
        return Err(ArchiveError::BadMagic {
            path: path.to_path_buf(),
        }
        .into());
    }
    let len = bytes.len() as u64;
    let mut cursor = std::io::Cursor::new(&bytes[..]);
    cursor.set_position(6);
    let mut out = Vec::new();
    while cursor.position() < len {
        let offset = cursor.position();
        out.push(read_record(&mut cursor, path, offset, len)?);
    }
    Ok(out)
}

/// One named tensor inside a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Serializes records as `FCKP1\0` then
/// `[u32 name_len][name][u32 rank][u32 dims...][f32 data...]` per record.
pub fn encode_checkpoint(records: &[CheckpointRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(FCKP_MAGIC);
    for r in records {
        let n: usize = r.shape.iter().product();
        if n != r.data.len() {
            return Err(Error::shape(
                "encode_checkpoint",
                format!("{}: shape {:?} vs {} values", r.name, r.shape, r.data.len()),
            ));
        }
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &r.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Vec<CheckpointRecord>> {
    if bytes.len() < 6 || &bytes[..6] != FCKP_MAGIC {
        return Err(ArchiveError::BadMagic {
            path: path.to_path_buf(),
        }
        .into());
    }
    let mut pos = 6usize;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let start = pos as u64;
        let truncated = || {
            Error::from(ArchiveError::Truncated {
                path: path.to_path_buf(),
                offset: start,
            })
        };
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(truncated)?;
            pos += n;
            Ok(s)
        };
        let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
        let name_len = u32_at(take(4)?);
        let name = String::from_utf8(take(name_len)?.to_vec()).map_err(|_| truncated())?;
        let rank = u32_at(take(4)?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32_at(take(4)?));
        }
        let n: usize = shape.iter().product();
        let data = take(4 * n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(CheckpointRecord { name, shape, data });
    }
    Ok(out)
}
