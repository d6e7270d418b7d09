//! Reverse-mode differentiation over sparse tensors.
//!
//! Each recorded node owns its forward value and, unless it is a leaf, a
//! [`GradFn`] that maps the gradient of its output features to gradients of
//! its inputs (accumulating parameter gradients on the side). Nodes are
//! appended in execution order, so the node list is already topologically
//! sorted and backward is a single reverse sweep.

use crate::autograd::params::{ParamGrads, ParamStore};
use crate::tensor::SparseTensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradient rule of a recorded operation.
pub trait GradFn {
    /// Returns one gradient buffer per input, each the length of that
    /// input's feature matrix.
    fn backward(
        &self,
        out_grad: &[f64],
        inputs: &[&SparseTensor],
        store: &ParamStore,
        param_grads: &mut ParamGrads,
    ) -> Vec<Vec<f64>>;
}

struct Node {
    value: SparseTensor,
    inputs: Vec<Var>,
    grad_fn: Option<Box<dyn GradFn>>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, value: SparseTensor) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            grad_fn: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn record(&mut self, value: SparseTensor, inputs: Vec<Var>, grad_fn: Box<dyn GradFn>) -> Var {
        debug_assert!(inputs.iter().all(|v| v.0 < self.nodes.len()));
        self.nodes.push(Node {
            value,
            inputs,
            grad_fn: Some(grad_fn),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &SparseTensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Copies a value onto a fresh leaf, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.leaf(value)
    }

    /// Propagates the seed gradients `d loss / d features` back to every
    /// parameter and every node reachable from a seed.
    pub fn backward(&self, seeds: Vec<(Var, Vec<f64>)>, store: &ParamStore) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            debug_assert_eq!(g.len(), self.nodes[v.0].value.features().len());
            accumulate(&mut grads[v.0], g);
        }
        let mut param_grads = ParamGrads::zeros_like(store);
        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            let Some(grad_fn) = &node.grad_fn else { continue };
            let (before, rest) = grads.split_at_mut(i);
            let Some(g) = rest[0].as_ref() else { continue };
            let inputs: Vec<&SparseTensor> =
                node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let in_grads = grad_fn.backward(g, &inputs, store, &mut param_grads);
            debug_assert_eq!(in_grads.len(), node.inputs.len());
            for (v, ig) in node.inputs.iter().zip(in_grads) {
                accumulate(&mut before[v.0], ig);
            }
        }
        Gradients {
            params: param_grads,
            nodes: grads,
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

pub struct Gradients {
    pub params: ParamGrads,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a node's features, if any seed reaches it.
    pub fn node(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }
}
