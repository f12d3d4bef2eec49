//! Binary network checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LTGC"  u16 version
//! u32 hash_len, hash bytes (UTF-8 hex of the config hash)
//! u64 task, u64 epoch, u64 step
//! u32 tensor_count
//!   per tensor: u32 name_len, name bytes, u64 len, len x f64
//! u32 CRC32 of everything above
//! ```
//!
//! Tensors are named `layer{i}.weights`, `layer{i}.bias`, `layer{i}.gate`,
//! `layer{i}.v_th`; optimizer moments are `adam.m.<param>` and
//! `adam.v.<param>`, and the header `step` is the optimizer step count.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::train::{AdamConfig, AdamState};

const MAGIC: &[u8; 4] = b"LTGC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub task: u64,
    pub epoch: u64,
    pub step: u64,
    pub tensors: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    /// Captures parameters, thresholds and (optionally) optimizer moments.
    pub fn capture(net: &Network, optimizer: Option<&AdamState>, config_hash: &str) -> Self {
        let mut tensors = Vec::new();
        for (i, layer) in net.layers.iter().enumerate() {
            tensors.push((format!("layer{i}.weights"), layer.weights.clone()));
            tensors.push((format!("layer{i}.bias"), layer.bias.clone()));
            tensors.push((format!("layer{i}.gate"), layer.gate_raw.clone()));
            tensors.push((format!("layer{i}.v_th"), vec![layer.threshold.v_th]));
        }
        let mut step = 0;
        if let Some(opt) = optimizer {
            step = opt.step;
            let ids: Vec<String> = net.params().iter().map(|(id, _)| id.to_string()).collect();
            for (id, m) in ids.iter().zip(&opt.first) {
                tensors.push((format!("adam.m.{id}"), m.clone()));
            }
            for (id, v) in ids.iter().zip(&opt.second) {
                tensors.push((format!("adam.v.{id}"), v.clone()));
            }
        }
        Self {
            config_hash: config_hash.to_string(),
            task: 0,
            epoch: 0,
            step,
            tensors,
        }
    }

    pub fn with_position(mut self, task: u64, epoch: u64) -> Self {
        self.task = task;
        self.epoch = epoch;
        self
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    fn require(&self, name: &str, len: usize) -> Result<&[f64]> {
        let t = self
            .tensor(name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor `{name}`")))?;
        if t.len() != len {
            return Err(Error::Shape {
                context: "checkpoint tensor",
                expected: format!("{name}[{len}]"),
                got: format!("{name}[{}]", t.len()),
            });
        }
        Ok(t)
    }

    /// Writes parameters and thresholds into an architecture-compatible network.
    pub fn restore(&self, net: &mut Network) -> Result<()> {
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let w = self.require(&format!("layer{i}.weights"), layer.weights.len())?;
            layer.weights.copy_from_slice(w);
            let b = self.require(&format!("layer{i}.bias"), layer.bias.len())?;
            layer.bias.copy_from_slice(b);
            let g = self.require(&format!("layer{i}.gate"), layer.gate_raw.len())?;
            layer.gate_raw.copy_from_slice(g);
            layer.threshold.v_th = self.require(&format!("layer{i}.v_th"), 1)?[0];
        }
        net.validate()
    }

    /// Optimizer state for `net`'s parameters, if the checkpoint holds one.
    pub fn optimizer(&self, net: &Network, config: AdamConfig) -> Result<Option<AdamState>> {
        let params = net.params();
        let Some((first_id, _)) = params.first() else {
            return Ok(None);
        };
        if self.tensor(&format!("adam.m.{first_id}")).is_none() {
            return Ok(None);
        }
        let mut state = AdamState::for_params(config, &params);
        state.step = self.step;
        for (k, (id, p)) in params.iter().enumerate() {
            state.first[k].copy_from_slice(self.require(&format!("adam.m.{id}"), p.len())?);
            state.second[k].copy_from_slice(self.require(&format!("adam.v.{id}"), p.len())?);
        }
        Ok(Some(state))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &self.config_hash);
        for v in [self.task, self.epoch, self.step] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, values) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 2 + 4 || &bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            let n = bytes.len().min(4);
            found[..n].copy_from_slice(&bytes[..n]);
            return Err(Error::BadMagic {
                path: "<checkpoint>".into(),
                expected: u32::from_be_bytes(*MAGIC),
                found: u32::from_be_bytes(found),
            });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let config_hash = r.string()?;
        let task = r.u64()?;
        let epoch = r.u64()?;
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let len = r.u64()? as usize;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, values));
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            config_hash,
            task,
            epoch,
            step,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::BadMagic { expected, found, .. } => Error::BadMagic {
                path: path.to_path_buf(),
                expected,
                found,
            },
            other => other,
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated {
            path: "<checkpoint>".into(),
            needed: self.pos.saturating_add(n),
            available: self.buf.len(),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}
