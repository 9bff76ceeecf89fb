//! The `OODA` v1 binary dump.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "OODA"
//! 4       4     version (u32) = 1
//! 8       4     n_samples (u32)
//! 12      4     n_dims (u32)
//! 16      1     flags (u8): bit0 = labels present, bit1 = tag byte present
//! 17      4*N*D payload, row-major f32
//! ...     4*N   labels (u32), only if bit0
//! ...     1     tag byte (0 id_train, 1 id_test, 2 ood), only if bit1
//! ```
//!
//! The payload is 32-bit float to match typical activation dumps; values are
//! widened to f64 on read without any rounding beyond the widening itself.
//! A version bump is reserved for a future f64 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{OodError, Result};
use crate::types::{ActivationSet, DistributionTag, ReferenceProfile};

use super::config::parse_kv;

pub const MAGIC: [u8; 4] = *b"OODA";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 17;

const FLAG_LABELS: u8 = 0b01;
const FLAG_TAG: u8 = 0b10;

/// Parsed dump header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u32,
    pub n_samples: u32,
    pub n_dims: u32,
    pub flags: u8,
}

impl DumpHeader {
    pub fn has_labels(&self) -> bool {
        self.flags & FLAG_LABELS != 0
    }

    pub fn has_tag(&self) -> bool {
        self.flags & FLAG_TAG != 0
    }

    /// Total file size implied by the header.
    pub fn expected_len(&self) -> u64 {
        let n = u64::from(self.n_samples);
        let d = u64::from(self.n_dims);
        let mut len = HEADER_LEN as u64 + 4 * n * d;
        if self.has_labels() {
            len += 4 * n;
        }
        if self.has_tag() {
            len += 1;
        }
        len
    }
}

/// Writes a set as an `OODA` v1 dump. Writing then reading yields a
/// bit-identical float payload.
pub fn write_activation_set(set: &ActivationSet, path: &Path) -> Result<()> {
    let n = set.n_samples();
    let d = set.n_dims();
    let payload_bytes = (n as u128) * (d as u128) * 4;
    if n > u32::MAX as usize || d > u32::MAX as usize || payload_bytes > usize::MAX as u128 {
        return Err(OodError::DimensionOverflow { n, d });
    }
    let mut flags = 0u8;
    if set.labels().is_some() {
        flags |= FLAG_LABELS;
    }
    if set.tag().is_some() {
        flags |= FLAG_TAG;
    }

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&[flags])?;
    for &v in set.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    if let Some(labels) = set.labels() {
        for &l in labels {
            w.write_all(&l.to_le_bytes())?;
        }
    }
    if let Some(tag) = set.tag() {
        w.write_all(&[tag.as_byte()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<DumpHeader> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(r, &mut magic, HEADER_LEN as u64)?;
    if magic != MAGIC {
        return Err(OodError::BadMagic(magic));
    }
    let mut buf4 = [0u8; 4];
    read_exact_or_truncated(r, &mut buf4, HEADER_LEN as u64)?;
    let version = u32::from_le_bytes(buf4);
    if version != FORMAT_VERSION {
        return Err(OodError::UnsupportedVersion(version));
    }
    read_exact_or_truncated(r, &mut buf4, HEADER_LEN as u64)?;
    let n_samples = u32::from_le_bytes(buf4);
    read_exact_or_truncated(r, &mut buf4, HEADER_LEN as u64)?;
    let n_dims = u32::from_le_bytes(buf4);
    let mut flag = [0u8; 1];
    read_exact_or_truncated(r, &mut flag, HEADER_LEN as u64)?;
    Ok(DumpHeader {
        version,
        n_samples,
        n_dims,
        flags: flag[0],
    })
}

fn read_exact_or_truncated(r: &mut impl Read, buf: &mut [u8], expected: u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            OodError::TruncatedPayload { expected, got: 0 }
        } else {
            OodError::Io(e)
        }
    })
}

/// Reads an `OODA` v1 dump, rejecting any file whose actual length disagrees
/// with the header.
pub fn read_activation_set(path: &Path) -> Result<ActivationSet> {
    let file = File::open(path)?;
    let actual_len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let header = read_header(&mut r)?;
    let expected = header.expected_len();
    if actual_len < expected {
        return Err(OodError::TruncatedPayload {
            expected,
            got: actual_len,
        });
    }
    if actual_len > expected {
        return Err(OodError::TrailingBytes(actual_len - expected));
    }
    if header.n_samples == 0 || header.n_dims == 0 {
        return Err(OodError::EmptyInput("activation dump"));
    }

    let n = header.n_samples as usize;
    let d = header.n_dims as usize;
    let mut payload = vec![0u8; 4 * n * d];
    read_exact_or_truncated(&mut r, &mut payload, expected)?;
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(OodError::NonFinitePayload(i));
        }
        data.push(f64::from(v));
    }

    let labels = if header.has_labels() {
        let mut raw = vec![0u8; 4 * n];
        read_exact_or_truncated(&mut r, &mut raw, expected)?;
        Some(
            raw.chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    } else {
        None
    };

    let tag = if header.has_tag() {
        let mut b = [0u8; 1];
        read_exact_or_truncated(&mut r, &mut b, expected)?;
        Some(DistributionTag::from_byte(b[0])?)
    } else {
        None
    };

    ActivationSet::new(data, n, d, labels, tag)
}

/// Persists a profile as a 1 x D dump plus a `<path>.count` sidecar carrying
/// the sample count and source checksum.
pub fn write_profile(profile: &ReferenceProfile, path: &Path) -> Result<()> {
    let set = ActivationSet::new(profile.mu().to_vec(), 1, profile.dim(), None, None)?;
    write_activation_set(&set, path)?;
    let sidecar = sidecar_path(path);
    let mut w = BufWriter::new(File::create(sidecar)?);
    writeln!(w, "count={}", profile.count())?;
    writeln!(w, "source_checksum={:#018x}", profile.source_checksum())?;
    w.flush()?;
    Ok(())
}

/// Reads a profile dump and its sidecar back. The payload went through f32,
/// so values are exact at f32 precision.
pub fn read_profile(path: &Path) -> Result<ReferenceProfile> {
    let set = read_activation_set(path)?;
    if set.n_samples() != 1 {
        return Err(OodError::BadParameter(format!(
            "profile dump must hold exactly one row, found {}",
            set.n_samples()
        )));
    }
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar)?;
    let kv = parse_kv(&text)?;
    let mut count = None;
    let mut checksum = 0u64;
    for (k, v) in &kv {
        match k.as_str() {
            "count" => {
                count = Some(v.parse::<usize>().map_err(|_| OodError::BadConfig {
                    key: "count".into(),
                    reason: format!("not an integer: `{v}`"),
                })?)
            }
            "source_checksum" => {
                let hex = v.trim_start_matches("0x");
                checksum = u64::from_str_radix(hex, 16).map_err(|_| OodError::BadConfig {
                    key: "source_checksum".into(),
                    reason: format!("not a hex integer: `{v}`"),
                })?;
            }
            other => {
                return Err(OodError::BadConfig {
                    key: other.into(),
                    reason: "unknown sidecar key".into(),
                })
            }
        }
    }
    let count = count.ok_or_else(|| OodError::BadConfig {
        key: "count".into(),
        reason: "missing from profile sidecar".into(),
    })?;
    ReferenceProfile::new(set.data().to_vec(), count, checksum)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".count");
    std::path::PathBuf::from(s)
}
