//! LTGS spike file.
//!
//! Layout (integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `LTGS` |
//! | 2     | version (u16) |
//! | 4 x 3 | batch, time steps, features (u32) |
//! | 4 + n | metadata length (u32) + UTF-8 JSON: encoding spec and source ids |
//! | ceil(b*t*f / 8) | raster, row-major, bit-packed LSB first |
//! | 4     | CRC32 (IEEE) of every preceding byte |

use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{EncodingSpec, SpikeTrainBatch};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LTGS";
pub const SPIKE_FILE_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    spec: EncodingSpec,
    source_ids: Vec<u64>,
}

pub fn write_spikes(batch: &SpikeTrainBatch) -> Result<Vec<u8>> {
    let (b, t, f) = batch.spikes.dim();
    let meta = serde_json::to_vec(&Metadata {
        spec: batch.spec.clone(),
        source_ids: batch.source_ids.clone(),
    })?;
    let total = b * t * f;
    let mut out = Vec::with_capacity(26 + meta.len() + total / 8 + 5);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SPIKE_FILE_VERSION.to_le_bytes());
    for d in [b, t, f] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    let mut packed = vec![0u8; total.div_ceil(8)];
    for (i, &s) in batch.spikes.iter().enumerate() {
        if s != 0 {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&packed);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn read_spikes(bytes: &[u8]) -> Result<SpikeTrainBatch> {
    if bytes.len() < 4 + 2 + 12 + 4 + 4 {
        return Err(Error::Format("spike file too short".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if &body[..4] != MAGIC {
        return Err(Error::Format("missing LTGS magic".into()));
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != SPIKE_FILE_VERSION {
        return Err(Error::Version {
            expected: SPIKE_FILE_VERSION,
            found: version,
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(body[off..off + 4].try_into().unwrap()) as usize;
    let (b, t, f) = (u32_at(6), u32_at(10), u32_at(14));
    let meta_len = u32_at(18);
    let meta_end = 22 + meta_len;
    let total = b * t * f;
    if body.len() != meta_end + total.div_ceil(8) {
        return Err(Error::Format(format!(
            "expected {} bytes before checksum, found {}",
            meta_end + total.div_ceil(8),
            body.len()
        )));
    }
    let meta: Metadata = serde_json::from_slice(&body[22..meta_end])?;
    let packed = &body[meta_end..];
    let raster: Vec<u8> = (0..total).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect();
    let spikes = Array3::from_shape_vec((b, t, f), raster).map_err(|e| Error::Format(e.to_string()))?;
    SpikeTrainBatch::new(spikes, meta.spec, meta.source_ids)
}

pub fn save_spikes(batch: &SpikeTrainBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_spikes(batch)?).map_err(|e| Error::io(path, e))
}

pub fn load_spikes(path: impl AsRef<Path>) -> Result<SpikeTrainBatch> {
    let path = path.as_ref();
    read_spikes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(b: usize, t: usize, f: usize, bits: &[bool]) -> SpikeTrainBatch {
        let raster = (0..b * t * f).map(|i| bits[i % bits.len()] as u8).collect();
        SpikeTrainBatch::new(
            Array3::from_shape_vec((b, t, f), raster).unwrap(),
            EncodingSpec::new(50.0, 17),
            (0..b as u64).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn round_trip(b in 0usize..4, t in 1usize..9, f in 1usize..13,
                      bits in proptest::collection::vec(any::<bool>(), 1..64)) {
            let x = batch(b, t, f, &bits);
            prop_assert_eq!(read_spikes(&write_spikes(&x).unwrap()).unwrap(), x);
        }
    }

    #[test]
    fn empty_batch_round_trips() {
        let x = batch(0, 50, 20, &[true]);
        let bytes = write_spikes(&x).unwrap();
        assert_eq!(read_spikes(&bytes).unwrap(), x);
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let x = batch(2, 5, 7, &[true, false, false]);
        let mut bytes = write_spikes(&x).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(read_spikes(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn version_mismatch() {
        let x = batch(1, 2, 3, &[true]);
        let mut bytes = write_spikes(&x).unwrap();
        bytes[4] = 9;
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(read_spikes(&bytes), Err(Error::Version { found: 9, .. })));
    }
}
