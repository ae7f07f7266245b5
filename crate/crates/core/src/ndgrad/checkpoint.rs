//! Binary checkpoint container for named parameter tensors.
//!
//! Layout (all integers little-endian): magic bytes `SHIFTCKPT`, format
//! version `u32`, then per tensor: name length `u32`, UTF-8 name, shape rank
//! `u32`, shape dims as `u64` each, and the payload as `f64` values. Entries
//! run until end of file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndgrad::store::ParamStore;
use crate::ndgrad::tensor::Tensor;
use crate::scalar::Scalar;

const MAGIC: &[u8; 9] = b"SHIFTCKPT";
const FORMAT_VERSION: u32 = 1;

/// In-memory checkpoint: an ordered list of named f64 tensors. Scalars of
/// any width widen to f64 on save and narrow on load.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint {
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f64>) {
        let name = name.into();
        debug_assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate checkpoint entry {name}"
        );
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f64>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds every parameter of `store` under `prefix/<name>`.
    pub fn insert_store<S: Scalar>(&mut self, prefix: &str, store: &ParamStore<S>) {
        for (_, name, tensor) in store.iter() {
            self.insert(format!("{prefix}/{name}"), tensor.to_f64());
        }
    }

    /// Loads every parameter of `store` from `prefix/<name>` entries,
    /// checking shapes. Missing entries are an error.
    pub fn load_store<S: Scalar>(&self, prefix: &str, store: &mut ParamStore<S>) -> Result<()> {
        for id in store.ids() {
            let name = format!("{prefix}/{}", store.name(id));
            let src = self.get(&name).ok_or_else(|| {
                Error::contract(format!("checkpoint has no entry named {name}"))
            })?;
            if src.shape() != store.get(id).shape() {
                return Err(Error::dim(format!(
                    "checkpoint entry {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = Tensor::from_f64(src);
        }
        Ok(())
    }

    /// Rebuilds a parameter store from every `prefix/<name>` entry, with
    /// names sorted for a deterministic layout. Errors when the prefix has
    /// no entries.
    pub fn extract_store(&self, prefix: &str) -> Result<ParamStore<f64>> {
        let lead = format!("{prefix}/");
        let mut hits: Vec<(&str, &Tensor<f64>)> = self
            .entries
            .iter()
            .filter(|(n, _)| n.starts_with(&lead))
            .map(|(n, t)| (n.as_str(), t))
            .collect();
        if hits.is_empty() {
            return Err(Error::contract(format!(
                "checkpoint has no entries under {prefix}/"
            )));
        }
        hits.sort_unstable_by_key(|(n, _)| *n);
        let mut store = ParamStore::new();
        for (name, tensor) in hits {
            store.add(&name[lead.len()..], tensor.clone());
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for (name, tensor) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
            for &d in tensor.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::contract(format!(
                "{} is not a checkpoint file (bad magic)",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::contract(format!(
                "unsupported checkpoint format version {version}"
            )));
        }
        let mut entries = Vec::new();
        loop {
            let name_len = match read_u32_opt(&mut r)? {
                Some(n) => n as usize,
                None => break,
            };
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| Error::contract("checkpoint entry name is not UTF-8"))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            entries.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(Checkpoint { entries })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a u32 or returns None on clean EOF.
fn read_u32_opt<R: Read>(r: &mut R) -> Result<Option<u32>> {
    let mut b = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut b[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(Error::contract("checkpoint truncated mid-entry"));
        }
        filled += n;
    }
    Ok(Some(u32::from_le_bytes(b)))
}
