use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::{Gradients, Graph, Real, Result, TensorError, Var};

/// Named trainable parameters, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F: Real> {
    tensors: BTreeMap<String, ArrayD<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<F>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<F>> {
        self.tensors
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ArrayD<F>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(ArrayD::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<F>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<F>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Converts every tensor to another element type.
    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| G::of(x.to_f64().unwrap_or(f64::NAN)))))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Records every parameter as a differentiable leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph<F>) -> BoundParams<'g, F> {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), graph.leaf(v.clone())))
                .collect(),
        }
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen<'g>(&self, graph: &'g Graph<F>) -> BoundParams<'g, F> {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
                .collect(),
        }
    }
}

/// Parameters recorded on one graph.
pub struct BoundParams<'g, F: Real> {
    vars: BTreeMap<String, Var<'g, F>>,
}

/// Assembles bound parameters from already-recorded variables, e.g. the
/// inputs handed to a gradient check.
impl<'g, F: Real> FromIterator<(String, Var<'g, F>)> for BoundParams<'g, F> {
    fn from_iter<I: IntoIterator<Item = (String, Var<'g, F>)>>(iter: I) -> Self {
        BoundParams {
            vars: iter.into_iter().collect(),
        }
    }
}

impl<'g, F: Real> BoundParams<'g, F> {
    pub fn get(&self, name: &str) -> Result<Var<'g, F>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    /// Gradient per parameter name, zero-filled where the output does not
    /// depend on a parameter.
    pub fn gradients(&self, grads: &Gradients<F>) -> BTreeMap<String, ArrayD<F>> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), grads.wrt(*v)))
            .collect()
    }

    /// Like [`BoundParams::gradients`] but moves the arrays out of `grads`.
    pub fn take_gradients(&self, grads: &mut Gradients<F>) -> BTreeMap<String, ArrayD<F>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let g = grads
                    .take(v.id)
                    .unwrap_or_else(|| ArrayD::zeros(v.value().raw_dim()));
                (k.clone(), g)
            })
            .collect()
    }

    /// Names of parameters that received any gradient at all.
    pub fn touched(&self, grads: &Gradients<F>) -> Vec<String> {
        self.vars
            .iter()
            .filter(|(_, v)| grads.get(**v).is_some())
            .map(|(k, _)| k.clone())
            .collect()
    }
}
