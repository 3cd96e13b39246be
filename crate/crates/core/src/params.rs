//! Named parameters, AdaDelta optimization and the `BSPK1` checkpoint format.
//!
//! Checkpoint layout (all integers u64 little-endian):
//!
//! ```text
//! "BSPK1" | record count | records...
//! record := name length | UTF-8 name | rank | dims[rank] | f64 LE data
//! ```
//!
//! Optimizer accumulators are stored as ordinary records named
//! `opt/<param>/sq_grad` and `opt/<param>/sq_update`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"BSPK1";
pub const OPT_PREFIX: &str = "opt/";

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    value: Tensor,
    sq_grad: Tensor,
    sq_update: Tensor,
    trainable: bool,
}

/// Named tensors plus per-parameter AdaDelta state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    slots: BTreeMap<String, Slot>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable parameter. Names are unique.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.insert_slot(name, value, true)
    }

    /// Registers a tensor that is saved with the model but never updated.
    pub fn insert_frozen(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.insert_slot(name, value, false)
    }

    fn insert_slot(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<()> {
        if name.starts_with(OPT_PREFIX) {
            return Err(Error::InvalidArgument(format!("`{name}` uses the reserved prefix {OPT_PREFIX}")));
        }
        if self.slots.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let zeros = Tensor::zeros(value.shape());
        self.slots.insert(
            name.to_string(),
            Slot {
                value,
                sq_grad: zeros.clone(),
                sq_update: zeros,
                trainable,
            },
        );
        Ok(())
    }

    /// Inserts a parameter drawn uniformly from `[-range, range]`.
    pub fn insert_uniform(&mut self, name: &str, shape: &[usize], range: f64, rng: &mut impl Rng) -> Result<()> {
        let t = Tensor::from_fn(shape, |_| rng.gen_range(-range..=range));
        self.insert(name, t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    /// Replaces a value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if slot.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set",
                detail: format!("`{name}` is {:?}, got {:?}", slot.value.shape(), value.shape()),
            });
        }
        slot.value = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.slots
            .iter()
            .filter(|(_, s)| s.trainable)
            .map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    /// Bitwise equality of every value and accumulator.
    pub fn bitwise_eq(&self, other: &ParameterStore) -> bool {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        self.slots.len() == other.slots.len()
            && self.slots.iter().zip(&other.slots).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.trainable == b.trainable
                    && a.value.shape() == b.value.shape()
                    && bits(&a.value) == bits(&b.value)
                    && bits(&a.sq_grad) == bits(&b.sq_grad)
                    && bits(&a.sq_update) == bits(&b.sq_update)
            })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut records: Vec<(String, &Tensor)> = Vec::new();
        for (name, slot) in &self.slots {
            records.push((name.clone(), &slot.value));
        }
        for (name, slot) in &self.slots {
            if slot.trainable {
                records.push((format!("{OPT_PREFIX}{name}/sq_grad"), &slot.sq_grad));
                records.push((format!("{OPT_PREFIX}{name}/sq_update"), &slot.sq_update));
            }
        }
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(records.len() as u64).to_le_bytes())?;
        for (name, t) in records {
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u64).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint. Parameters without optimizer records load as frozen.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a BSPK1 checkpoint".into()));
        }
        let count = read_u64(r)?;
        let mut values: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut opt: BTreeMap<String, Tensor> = BTreeMap::new();
        for _ in 0..count {
            let len = read_u64(r)? as usize;
            if len > 1 << 16 {
                return Err(Error::Format(format!("implausible name length {len}")));
            }
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
            let rank = read_u64(r)? as usize;
            if rank > 8 {
                return Err(Error::Format(format!("implausible rank {rank} for `{name}`")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            let t = Tensor::new(shape, data)?;
            if let Some(rest) = name.strip_prefix(OPT_PREFIX) {
                opt.insert(rest.to_string(), t);
            } else if values.insert(name.clone(), t).is_some() {
                return Err(Error::Format(format!("duplicate record `{name}`")));
            }
        }
        let mut store = ParameterStore::new();
        for (name, value) in values {
            let sq_grad = opt.remove(&format!("{name}/sq_grad"));
            let sq_update = opt.remove(&format!("{name}/sq_update"));
            match (sq_grad, sq_update) {
                (Some(g), Some(u)) => {
                    if g.shape() != value.shape() || u.shape() != value.shape() {
                        return Err(Error::Format(format!("optimizer state shape mismatch for `{name}`")));
                    }
                    store.slots.insert(
                        name,
                        Slot {
                            value,
                            sq_grad: g,
                            sq_update: u,
                            trainable: true,
                        },
                    );
                }
                (None, None) => store.insert_frozen(&name, value)?,
                _ => return Err(Error::Format(format!("incomplete optimizer state for `{name}`"))),
            }
        }
        if let Some(orphan) = opt.keys().next() {
            return Err(Error::Format(format!("optimizer record without parameter: {orphan}")));
        }
        Ok(store)
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// AdaDelta hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
    /// Global gradient-norm threshold; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for AdaDelta {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

/// What one optimizer step did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub grad_norm: f64,
    pub clipped: bool,
    /// Set when a non-finite gradient caused the update to be skipped.
    pub skipped: bool,
}

impl AdaDelta {
    /// Applies one update. Gradients for names absent from `grads` count as
    /// zero; names unknown to the store are rejected.
    pub fn step(&self, store: &mut ParameterStore, grads: &BTreeMap<String, Tensor>) -> Result<StepReport> {
        let mut sq = 0.0;
        for (name, g) in grads {
            let slot = store
                .slots
                .get(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if slot.value.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adadelta",
                    detail: format!("`{name}` is {:?}, gradient {:?}", slot.value.shape(), g.shape()),
                });
            }
            if slot.trainable {
                sq += g.sq_norm();
            }
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Ok(StepReport {
                grad_norm: norm,
                clipped: false,
                skipped: true,
            });
        }
        let clipped = self.clip_norm > 0.0 && norm > self.clip_norm;
        let factor = if clipped { self.clip_norm / norm } else { 1.0 };
        let (rho, eps) = (self.rho, self.eps);
        for (name, g) in grads {
            let slot = store.slots.get_mut(name).expect("checked above");
            if !slot.trainable {
                continue;
            }
            let value = slot.value.data_mut();
            let eg = slot.sq_grad.data_mut();
            let ed = slot.sq_update.data_mut();
            for i in 0..value.len() {
                let gi = g.data()[i] * factor;
                eg[i] = rho * eg[i] + (1.0 - rho) * gi * gi;
                let delta = -((ed[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * gi;
                ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
                value[i] += delta;
            }
        }
        Ok(StepReport {
            grad_norm: norm,
            clipped,
            skipped: false,
        })
    }
}
