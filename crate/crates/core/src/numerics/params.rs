use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Buffers such as running statistics are stored but never optimized.
    pub trainable: bool,
}

/// Named tensors owned by a model, addressed by [`ParamId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.insert(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.insert(name.into(), value, false)
    }

    fn insert(&mut self, name: String, value: Tensor, trainable: bool) -> ParamId {
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry {
            name,
            value,
            trainable,
        });
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    /// Replaces a value, keeping the shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(Error::shape(
                "param set",
                format!(
                    "{}: {:?} vs {:?}",
                    entry.name,
                    entry.value.shape(),
                    value.shape()
                ),
            ));
        }
        entry.value = value;
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }
}

/// State threaded through one forward pass: the tape, read-only parameters,
/// the train/eval switch and the random stream used by dropout.
pub struct Ctx<'a> {
    pub tape: Tape,
    params: &'a ParamStore,
    training: bool,
    rng: &'a mut ChaCha8Rng,
    leaves: HashMap<ParamId, Var>,
    buffer_updates: Vec<(ParamId, Tensor)>,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: Tape, params: &'a ParamStore, training: bool, rng: &'a mut ChaCha8Rng) -> Self {
        Ctx {
            tape,
            params,
            training,
            rng,
            leaves: HashMap::new(),
            buffer_updates: Vec::new(),
        }
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn params(&self) -> &ParamStore {
        self.params
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    /// The tape variable for a parameter; one leaf per parameter per pass.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.leaves.get(&id) {
            return v.clone();
        }
        let entry = self.params.entry(id);
        let var = if entry.trainable {
            self.tape.leaf(entry.value.clone())
        } else {
            self.tape.constant(entry.value.clone())
        };
        self.leaves.insert(id, var.clone());
        var
    }

    /// Value of a buffer (running statistics) without creating a variable.
    pub fn buffer(&self, id: ParamId) -> &Tensor {
        self.params.get(id)
    }

    /// Inverted dropout drawing from this pass's random stream.
    pub fn dropout(&mut self, x: &Var, p: f64) -> Result<Var> {
        super::nn::dropout(&self.tape, x, p, self.training, self.rng)
    }

    pub(crate) fn push_buffer_update(&mut self, id: ParamId, value: Tensor) {
        self.buffer_updates.push((id, value));
    }

    /// Buffer values computed during a training pass, to be written back by
    /// the owner of the store.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    /// Gradients for every parameter used in this pass, in id order.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = self
            .leaves
            .iter()
            .filter(|(_, v)| v.requires_grad())
            .map(|(&id, v)| (id, grads.get_or_zeros(v)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

/// Writes buffer updates produced by a forward pass back into the store.
pub fn apply_buffer_updates(store: &mut ParamStore, updates: Vec<(ParamId, Tensor)>) -> Result<()> {
    for (id, value) in updates {
        store.set(id, value)?;
    }
    Ok(())
}
