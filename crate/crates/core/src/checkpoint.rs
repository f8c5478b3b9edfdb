//! Binary checkpoints: magic `OGRG`, u32 version, u32 entry count, then per
//! entry a u32 name length, the UTF-8 name, u32 ndim, u32 dims and a
//! little-endian f32 payload; a CRC32 of everything before it closes the file.
//!
//! Model tensors live under a caller-chosen prefix, optimizer moments under
//! `adam.m/` and `adam.v/`, the step as two exact f32 halves under
//! `meta/step`, and the configuration hash in the name of an empty entry
//! `meta/config_sha256=<hex>`.

use std::fs;
use std::path::Path;

use ogrg_tensor::Real;

use crate::error::{CoreError, Result};
use crate::nn::Store;
use crate::optim::AdamW;

pub const MAGIC: &[u8; 4] = b"OGRG";
pub const VERSION: u32 = 1;
const HASH_KEY: &str = "meta/config_sha256=";
const STEP_KEY: &str = "meta/step";
const STEP_SPLIT: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

fn bad(path: &str, msg: impl Into<String>) -> CoreError {
    CoreError::Checkpoint {
        path: path.into(),
        msg: msg.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(self.path, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, dims: &[usize], data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if dims.iter().product::<usize>() != data.len() {
            return Err(CoreError::Contract(format!("entry {name}: dims {dims:?} for {} values", data.len())));
        }
        if self.get(&name).is_some() {
            return Err(CoreError::Contract(format!("duplicate checkpoint entry {name}")));
        }
        self.entries.push(Entry {
            name,
            dims: dims.to_vec(),
            data,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
            for &d in &e.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses a checkpoint; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad(path, "not an OGRG checkpoint"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(bad(path, "CRC mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 4, path };
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(path, format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut ck = Checkpoint::default();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| bad(path, "entry name is not UTF-8"))?
                .to_string();
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| bad(path, format!("entry {name} is too large")))?;
            let data = r
                .take(len)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            ck.push(name, &dims, data).map_err(|e| bad(path, e.to_string()))?;
        }
        if r.pos != body.len() {
            return Err(bad(path, "trailing bytes after the last entry"));
        }
        Ok(ck)
    }

    /// Writes through a temporary file so a failed save never clobbers the
    /// previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let bytes = fs::read(path).map_err(|e| bad(&shown, e.to_string()))?;
        Self::from_bytes(&bytes, &shown)
    }

    /// Adds every parameter and buffer of `store` as `<prefix>/<name>`.
    pub fn add_store<T: Real>(&mut self, prefix: &str, store: &Store<T>) -> Result<()> {
        for (name, t, _) in store.entries() {
            let data = t.data().iter().map(|v| v.as_f64() as f32).collect();
            self.push(format!("{prefix}/{name}"), t.shape(), data)?;
        }
        Ok(())
    }

    /// Overwrites every tensor of `store` from `<prefix>/<name>`.
    pub fn load_store<T: Real>(&self, prefix: &str, store: &Store<T>) -> Result<()> {
        for (name, _, _) in store.entries() {
            let key = format!("{prefix}/{name}");
            let e = self
                .get(&key)
                .ok_or_else(|| CoreError::Contract(format!("checkpoint has no entry {key}")))?;
            let values: Vec<T> = e.data.iter().map(|&v| T::lit(v as f64)).collect();
            store.assign(name, &e.dims, &values)?;
        }
        Ok(())
    }

    /// Optimizer moments for the parameters of `store`, in parameter order.
    pub fn add_adam<T: Real>(&mut self, prefix: &str, store: &Store<T>, opt: &AdamW<T>) -> Result<()> {
        for (i, (name, t)) in store.named_params().into_iter().enumerate() {
            for (tag, moments) in [("m", &opt.m), ("v", &opt.v)] {
                let data = moments[i].iter().map(|v| v.as_f64() as f32).collect();
                self.push(format!("adam.{tag}/{prefix}/{name}"), t.shape(), data)?;
            }
        }
        Ok(())
    }

    pub fn load_adam<T: Real>(&self, prefix: &str, store: &Store<T>, opt: &mut AdamW<T>) -> Result<()> {
        for (i, (name, _)) in store.named_params().into_iter().enumerate() {
            for tag in ["m", "v"] {
                let key = format!("adam.{tag}/{prefix}/{name}");
                let e = self
                    .get(&key)
                    .ok_or_else(|| CoreError::Contract(format!("checkpoint has no entry {key}")))?;
                let dst = if tag == "m" { &mut opt.m[i] } else { &mut opt.v[i] };
                if dst.len() != e.data.len() {
                    return Err(CoreError::Contract(format!("entry {key} has {} values", e.data.len())));
                }
                *dst = e.data.iter().map(|&v| T::lit(v as f64)).collect();
            }
        }
        Ok(())
    }

    pub fn set_step(&mut self, step: u64) -> Result<()> {
        if step >= STEP_SPLIT * STEP_SPLIT {
            return Err(CoreError::Contract(format!("step {step} too large to store")));
        }
        self.entries.retain(|e| e.name != STEP_KEY);
        self.push(STEP_KEY, &[2], vec![(step / STEP_SPLIT) as f32, (step % STEP_SPLIT) as f32])
    }

    pub fn step(&self) -> Option<u64> {
        let e = self.get(STEP_KEY)?;
        match e.data[..] {
            [hi, lo] => Some(hi as u64 * STEP_SPLIT + lo as u64),
            _ => None,
        }
    }

    pub fn set_config_hash(&mut self, hash: &str) -> Result<()> {
        self.entries.retain(|e| !e.name.starts_with(HASH_KEY));
        self.push(format!("{HASH_KEY}{hash}"), &[0], Vec::new())
    }

    pub fn config_hash(&self) -> Option<&str> {
        self.entries.iter().find_map(|e| e.name.strip_prefix(HASH_KEY))
    }

    /// Refuses a checkpoint written for a different configuration.
    pub fn check_config_hash(&self, expected: &str) -> Result<()> {
        match self.config_hash() {
            Some(found) if found == expected => Ok(()),
            found => Err(CoreError::ConfigMismatch {
                expected: expected.to_string(),
                found: found.unwrap_or("<none>").to_string(),
            }),
        }
    }
}
