//! Named parameter storage with gradient accumulators.

use super::graph::{Graph, Var};
use super::{DenseTensor, Scalar};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
struct Entry<S> {
    value: DenseTensor<S>,
    grad: DenseTensor<S>,
}

/// Ordered map of named parameters, each with a gradient accumulator of
/// identical shape. Iteration order is the sorted name order, which keeps
/// optimizer updates and checkpoints deterministic.
///
/// A parameter's `requires_grad` flag doubles as its trainability switch;
/// frozen parameters keep zero gradients through `backward`.
#[derive(Debug, Clone)]
pub struct ParameterStore<S: Scalar> {
    entries: BTreeMap<String, Entry<S>>,
}

impl<S: Scalar> Default for ParameterStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParameterStore<S> {
    pub fn new() -> Self {
        ParameterStore { entries: BTreeMap::new() }
    }

    /// Register a parameter. Names must be unique; the tensor becomes
    /// trainable and its gradient accumulator starts at zero.
    pub fn insert(&mut self, name: &str, mut value: DenseTensor<S>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name:?}")));
        }
        value.set_requires_grad(true);
        let grad = DenseTensor::zeros(value.shape());
        self.entries.insert(name.to_string(), Entry { value, grad });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&DenseTensor<S>> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))
    }

    pub fn grad(&self, name: &str) -> Result<&DenseTensor<S>> {
        self.entries
            .get(name)
            .map(|e| &e.grad)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))
    }

    /// Replace a parameter value; the shape must match the registered one.
    pub fn set_value(&mut self, name: &str, value: DenseTensor<S>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))?;
        if entry.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "parameter {name:?} has shape {:?}, got {:?}",
                entry.value.shape(),
                value.shape()
            )));
        }
        let trainable = entry.value.requires_grad();
        entry.value = value;
        entry.value.set_requires_grad(trainable);
        Ok(())
    }

    /// Add `contrib` into the gradient accumulator of `name`.
    pub fn accumulate(&mut self, name: &str, contrib: &[S]) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))?;
        if entry.grad.numel() != contrib.len() {
            return Err(Error::Shape(format!(
                "gradient for {name:?} has {} elements, expected {}",
                contrib.len(),
                entry.grad.numel()
            )));
        }
        for (g, &c) in entry.grad.data_mut().iter_mut().zip(contrib) {
            *g += c;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().fill(S::zero());
        }
    }

    /// Toggle trainability of one parameter.
    pub fn set_trainable(&mut self, name: &str, on: bool) {
        if let Some(e) = self.entries.get_mut(name) {
            e.value.set_requires_grad(on);
        }
    }

    /// Toggle trainability of every parameter whose name starts with `prefix`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, on: bool) {
        for (name, e) in self.entries.iter_mut() {
            if name.starts_with(prefix) {
                e.value.set_requires_grad(on);
            }
        }
    }

    /// Sorted parameter names.
    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Total element count across all parameters.
    pub fn total_elements(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    /// Total element count across parameters whose name starts with `prefix`.
    pub fn elements_with_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, e)| e.value.numel())
            .sum()
    }

    /// Visit `(name, value, grad)` with the value mutable — the optimizer hook.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&str, &mut DenseTensor<S>, &DenseTensor<S>)) {
        for (name, entry) in self.entries.iter_mut() {
            let Entry { value, grad } = entry;
            f(name, value, grad);
        }
    }

    /// Euclidean norm over the gradients of all trainable parameters.
    pub fn trainable_grad_norm(&self) -> f64 {
        let mut acc = 0.0;
        for e in self.entries.values() {
            if e.value.requires_grad() {
                for &g in e.grad.data() {
                    let g = g.as_f64();
                    acc += g * g;
                }
            }
        }
        acc.sqrt()
    }

    /// Convert every parameter (and trainability flag) to another scalar type.
    pub fn cast<T: Scalar>(&self) -> ParameterStore<T> {
        let entries = self
            .entries
            .iter()
            .map(|(name, e)| {
                (name.clone(), Entry { value: e.value.cast::<T>(), grad: DenseTensor::zeros(e.grad.shape()) })
            })
            .collect();
        ParameterStore { entries }
    }
}

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Max over checked elements of |analytic − central| / (|analytic| + |central| + 1e-12).
    pub max_rel_err: f64,
    /// Parameter holding the worst element.
    pub worst_param: String,
    /// Flat index of the worst element.
    pub worst_index: usize,
    /// Number of elements compared.
    pub checked: usize,
}

/// Compare reverse-mode gradients of `f` against central finite differences.
///
/// `f` must rebuild the same scalar loss from any store it is handed; it runs
/// once on a tape for analytic gradients and `2·numel` more times on
/// element-wise ±h perturbations.
pub fn finite_difference_check<S, F>(f: F, store: &ParameterStore<S>, h: f64) -> Result<FdReport>
where
    S: Scalar,
    F: Fn(&mut Graph<S>, &ParameterStore<S>) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::Contract(format!("finite_difference_check needs h > 0, got {h}")));
    }

    // Analytic pass.
    let mut analytic = store.clone();
    analytic.zero_grads();
    let mut graph = Graph::new();
    let loss = f(&mut graph, &analytic)?;
    graph.backward(loss, &mut analytic)?;

    let eval = |s: &ParameterStore<S>| -> Result<f64> {
        let mut g = Graph::new();
        let l = f(&mut g, s)?;
        Ok(g.value(l).item().as_f64())
    };

    let mut work = store.clone();
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let hs = S::from_f64(h);

    for name in store.names() {
        if !store.get(&name)?.requires_grad() {
            continue;
        }
        let numel = store.get(&name)?.numel();
        for idx in 0..numel {
            let orig = work.get(&name)?.data()[idx];

            let mut plus = work.get(&name)?.clone();
            plus.data_mut()[idx] = orig + hs;
            work.set_value(&name, plus)?;
            let lp = eval(&work)?;

            let mut minus = work.get(&name)?.clone();
            minus.data_mut()[idx] = orig - hs;
            work.set_value(&name, minus)?;
            let lm = eval(&work)?;

            let mut restore = work.get(&name)?.clone();
            restore.data_mut()[idx] = orig;
            work.set_value(&name, restore)?;

            let central = (lp - lm) / (2.0 * h);
            let a = analytic.grad(&name)?.data()[idx].as_f64();
            let rel = (a - central).abs() / (a.abs() + central.abs() + 1e-12);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}
