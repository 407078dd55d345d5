//! Named parameter storage, tape binding and grouped Adam.

use std::cell::RefCell;
use std::collections::BTreeMap;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::{Gradients, Tape, Tensor, Var};
use crate::{Error, Result, Scalar};

/// Parameters keyed by name, iterated in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors.get(name).ok_or_else(|| Error::Precondition(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<f32>> {
        self.tensors.get_mut(name).ok_or_else(|| Error::Precondition(format!("unknown parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<f32>)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// First parameter holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors.iter().find(|(_, t)| !t.all_finite()).map(|(n, _)| n.as_str())
    }

    /// `self <- decay * self + (1 - decay) * other` for every shared name.
    pub fn ema_update(&mut self, other: &ParamStore, decay: f32) -> Result<()> {
        for (name, t) in &mut self.tensors {
            let o = other.get(name)?;
            if o.shape() != t.shape() {
                return Err(Error::ShapeMismatch(format!("ema `{name}`")));
            }
            for (a, &b) in t.data_mut().iter_mut().zip(o.data()) {
                *a = decay * *a + (1.0 - decay) * b;
            }
        }
        Ok(())
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor<f32>> {
        self.tensors
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor<f32>>) -> Self {
        Self { tensors }
    }
}

/// Source of named parameter handles on a tape.
pub trait Params {
    fn param(&self, name: &str) -> Result<Var>;
}

impl Params for BTreeMap<String, Var> {
    fn param(&self, name: &str) -> Result<Var> {
        self.get(name).copied().ok_or_else(|| Error::Precondition(format!("unknown parameter `{name}`")))
    }
}

impl<T: Scalar> Params for Binder<'_, '_, '_, T> {
    fn param(&self, name: &str) -> Result<Var> {
        self.get(name)
    }
}

/// Lazily places parameters of a store on a tape, casting to `T`.
pub struct Binder<'s, 't, 'a, T> {
    tape: &'t Tape<'a, T>,
    store: &'s ParamStore,
    trainable: bool,
    bound: RefCell<BTreeMap<String, Var>>,
}

impl<'s, 't, 'a, T: Scalar> Binder<'s, 't, 'a, T> {
    /// Parameters become tracked leaves.
    pub fn new(tape: &'t Tape<'a, T>, store: &'s ParamStore) -> Self {
        Self { tape, store, trainable: true, bound: RefCell::new(BTreeMap::new()) }
    }

    /// Parameters become constants.
    pub fn frozen(tape: &'t Tape<'a, T>, store: &'s ParamStore) -> Self {
        Self { trainable: false, ..Self::new(tape, store) }
    }

    pub fn tape(&self) -> &'t Tape<'a, T> {
        self.tape
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.borrow().get(name) {
            return Ok(v);
        }
        let value = self.store.get(name)?.cast::<T>();
        let v = if self.trainable { self.tape.var(value) } else { self.tape.constant(value) };
        self.bound.borrow_mut().insert(name.to_owned(), v);
        Ok(v)
    }

    /// Gradients of every bound parameter, in f32.
    pub fn gradients(&self, grads: &Gradients<T>) -> BTreeMap<String, Tensor<f32>> {
        self.bound
            .borrow()
            .iter()
            .map(|(name, &v)| (name.clone(), grads.get_or_zeros(self.tape, v).cast::<f32>()))
            .collect()
    }

    pub fn bound_vars(&self) -> Vec<(String, Var)> {
        self.bound.borrow().iter().map(|(n, &v)| (n.clone(), v)).collect()
    }
}

/// Adds `scale * b` into `a`, inserting missing names.
pub fn accumulate_grads(a: &mut BTreeMap<String, Tensor<f32>>, b: &BTreeMap<String, Tensor<f32>>, scale: f32) {
    for (name, g) in b {
        let scaled = g.map(|x| x * scale);
        match a.get_mut(name) {
            Some(acc) => acc.add_assign(&scaled),
            None => {
                a.insert(name.clone(), scaled);
            }
        }
    }
}

/// Adam over a [`ParamStore`] with learning rates chosen by name prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    groups: Vec<(String, f64)>,
    default_lr: f64,
    states: BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn new(default_lr: f64) -> Self {
        Self { groups: Vec::new(), default_lr, states: BTreeMap::new() }
    }

    /// Names starting with `prefix` use `lr`. Earlier groups win.
    pub fn with_group(mut self, prefix: impl Into<String>, lr: f64) -> Self {
        self.groups.push((prefix.into(), lr));
        self
    }

    pub fn lr_for(&self, name: &str) -> f64 {
        self.groups.iter().find(|(p, _)| name.starts_with(p.as_str())).map_or(self.default_lr, |&(_, lr)| lr)
    }

    pub fn states(&self) -> &BTreeMap<String, AdamState> {
        &self.states
    }

    pub fn set_states(&mut self, states: BTreeMap<String, AdamState>) {
        self.states = states;
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        for (name, g) in grads {
            let lr = self.lr_for(name);
            let p = store.get_mut(name)?;
            let state = self.states.entry(name.clone()).or_insert_with(|| AdamState::new(p.len()));
            adam_step(p, g, state, AdamConfig::with_lr(lr))?;
        }
        Ok(())
    }
}
