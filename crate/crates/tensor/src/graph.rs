//! Tape of recorded operations and the reverse sweep over it.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use ndarray::ArrayD;

use crate::{Real, Result, TensorError};

/// Vector-Jacobian product of one recorded op.
///
/// Receives the gradient of the op output and a mask telling which parents
/// need a gradient; returns one entry per parent, in parent order.
pub(crate) type BackwardFn<F> = Box<dyn Fn(&ArrayD<F>, &[bool]) -> Vec<Option<ArrayD<F>>>>;

struct Node<F: Real> {
    value: Rc<ArrayD<F>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<F>>,
    needs_grad: bool,
    retain: bool,
}

/// A single computation graph. Not `Sync`: one graph per worker.
pub struct Graph<F: Real> {
    nodes: RefCell<Vec<Node<F>>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&self, value: ArrayD<F>) -> Var<'_, F> {
        self.push_node(Rc::new(value), Vec::new(), None, false)
    }

    /// Records a differentiable leaf (an input or a parameter).
    pub fn leaf(&self, value: ArrayD<F>) -> Var<'_, F> {
        let var = self.push_node(Rc::new(value), Vec::new(), None, true);
        self.nodes.borrow_mut()[var.id].retain = true;
        var
    }

    /// Keeps the gradient of an intermediate node in the result of
    /// [`Graph::backward`]. Leaves are always retained.
    pub fn retain_grad(&self, var: Var<'_, F>) {
        self.nodes.borrow_mut()[var.id].retain = true;
    }

    pub(crate) fn push_op(
        &self,
        value: ArrayD<F>,
        parents: &[Var<'_, F>],
        backward: BackwardFn<F>,
    ) -> Var<'_, F> {
        let needs_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].needs_grad)
        };
        let ids = parents.iter().map(|p| p.id).collect();
        if needs_grad {
            self.push_node(Rc::new(value), ids, Some(backward), true)
        } else {
            self.push_node(Rc::new(value), ids, None, false)
        }
    }

    fn push_node(
        &self,
        value: Rc<ArrayD<F>>,
        parents: Vec<usize>,
        backward: Option<BackwardFn<F>>,
        needs_grad: bool,
    ) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            backward,
            needs_grad,
            retain: false,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<ArrayD<F>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn needs_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_, F>) -> Result<Gradients<F>> {
        let nodes = self.nodes.borrow();
        let n = nodes.len();
        let out = &nodes[output.id];
        if out.value.len() != 1 {
            return Err(TensorError::shape(
                "backward",
                format!("output must be scalar, got shape {:?}", out.value.shape()),
            ));
        }
        let mut pending: Vec<Option<ArrayD<F>>> = vec![None; n];
        let mut kept: Vec<Option<ArrayD<F>>> = vec![None; n];
        if out.needs_grad {
            pending[output.id] = Some(ArrayD::from_elem(out.value.raw_dim(), F::one()));
        }
        for id in (0..=output.id).rev() {
            let Some(grad) = pending[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Some(backward) = &node.backward {
                let mask: Vec<bool> = node.parents.iter().map(|&p| nodes[p].needs_grad).collect();
                let parent_grads = backward(&grad, &mask);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for ((&pid, pg), &need) in node.parents.iter().zip(parent_grads).zip(&mask) {
                    let Some(pg) = pg else { continue };
                    if !need {
                        continue;
                    }
                    debug_assert_eq!(pg.shape(), nodes[pid].value.shape());
                    match &mut pending[pid] {
                        Some(acc) => *acc += &pg,
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            if node.retain {
                kept[id] = Some(if grad.is_standard_layout() {
                    grad
                } else {
                    grad.as_standard_layout().into_owned()
                });
            }
        }
        Ok(Gradients { grads: kept })
    }
}

/// Handle to a node on a [`Graph`].
pub struct Var<'g, F: Real> {
    graph: &'g Graph<F>,
    pub(crate) id: usize,
}

impl<F: Real> Clone for Var<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F: Real> Copy for Var<'_, F> {}

impl<F: Real> fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<'g, F: Real> Var<'g, F> {
    pub fn graph(&self) -> &'g Graph<F> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<ArrayD<F>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.needs_grad(self.id)
    }

    /// Value of a one-element tensor.
    pub fn scalar(&self) -> F {
        let v = self.value();
        v.iter().next().copied().unwrap_or_else(F::zero)
    }
}

/// Gradients of a scalar output with respect to retained nodes.
#[derive(Debug, Clone)]
pub struct Gradients<F: Real> {
    grads: Vec<Option<ArrayD<F>>>,
}

impl<F: Real> Gradients<F> {
    /// `None` when the output does not depend on `var` (or it was not retained).
    pub fn get(&self, var: Var<'_, F>) -> Option<&ArrayD<F>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient, materialized as zeros when the output does not depend on `var`.
    pub fn wrt(&self, var: Var<'_, F>) -> ArrayD<F> {
        match self.get(var) {
            Some(g) => g.clone(),
            None => ArrayD::zeros(var.value().raw_dim()),
        }
    }

    pub(crate) fn take(&mut self, id: usize) -> Option<ArrayD<F>> {
        self.grads.get_mut(id).and_then(Option::take)
    }
}
