//! Named parameter storage shared by models, optimizers, and checkpoints.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::ndgrad::tensor::Tensor;
use crate::scalar::Scalar;

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(0);

/// Process-unique handle for one parameter tensor. Ids are never reused, so
/// two stores (for example a live model and its slow-moving shadow copy)
/// can coexist in one optimizer context without colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        ParamId(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone)]
struct Entry<S: Scalar> {
    id: ParamId,
    name: String,
    tensor: Tensor<S>,
}

/// An ordered collection of named parameters. Iteration order is insertion
/// order, which makes optimizer updates and serialization deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S: Scalar> {
    entries: Vec<Entry<S>>,
    by_id: HashMap<ParamId, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        let id = ParamId::fresh();
        self.by_id.insert(id, self.entries.len());
        self.entries.push(Entry { id, name, tensor });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[self.by_id[&id]].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.entries[self.by_id[&id]].tensor
    }

    /// Id registered under `name`, if any. Lets model handles rebind onto a
    /// detached copy of their parameters.
    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.id)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[self.by_id[&id]].name
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<S>)> {
        self.entries
            .iter()
            .map(|e| (e.id, e.name.as_str(), &e.tensor))
    }

    pub fn total_parameters(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    /// Deep copy with fresh ids. Used for slow-moving shadow copies that
    /// must never share optimizer state with the live parameters.
    pub fn clone_detached(&self) -> ParamStore<S> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            out.add(e.name.clone(), e.tensor.clone());
        }
        out
    }

    /// In-place exponential moving average toward `live`:
    /// `shadow <- decay * shadow + (1 - decay) * live`.
    /// Entries are matched positionally and must agree in name and shape.
    pub fn ema_update_from(&mut self, live: &ParamStore<S>, decay: S) -> Result<()> {
        if self.entries.len() != live.entries.len() {
            return Err(Error::contract(format!(
                "shadow has {} parameters, live has {}",
                self.entries.len(),
                live.entries.len()
            )));
        }
        let keep = decay;
        let blend = S::one() - decay;
        for (mine, theirs) in self.entries.iter_mut().zip(&live.entries) {
            if mine.name != theirs.name || mine.tensor.shape() != theirs.tensor.shape() {
                return Err(Error::contract(format!(
                    "shadow parameter {} does not match live parameter {}",
                    mine.name, theirs.name
                )));
            }
            for (s, &l) in mine
                .tensor
                .data_mut()
                .iter_mut()
                .zip(theirs.tensor.data())
            {
                *s = keep * *s + blend * l;
            }
        }
        Ok(())
    }

    /// Copies values from `other` (matched by name), leaving ids untouched.
    pub fn load_values_from(&mut self, other: &ParamStore<S>) -> Result<()> {
        for e in &mut self.entries {
            let src = other
                .entries
                .iter()
                .find(|o| o.name == e.name)
                .ok_or_else(|| Error::contract(format!("no source parameter named {}", e.name)))?;
            if src.tensor.shape() != e.tensor.shape() {
                return Err(Error::dim(format!(
                    "parameter {} has shape {:?}, source has {:?}",
                    e.name,
                    e.tensor.shape(),
                    src.tensor.shape()
                )));
            }
            e.tensor = src.tensor.clone();
        }
        Ok(())
    }
}
