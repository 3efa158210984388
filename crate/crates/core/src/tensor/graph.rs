//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] owns every value produced during a forward pass. Operations are
//! appended in application order; [`Graph::backward`] walks the tape from the
//! root towards the leaves, visiting each node once.

use super::dense::Tensor;
use super::element::Element;
use crate::error::{Error, Result};

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Inputs handed to a backward closure.
pub struct BackwardArgs<'a, T> {
    /// Gradient of the root with respect to this node's output.
    pub grad: &'a Tensor<T>,
    pub inputs: &'a [&'a Tensor<T>],
    pub output: &'a Tensor<T>,
    /// Which inputs need a gradient; closures may return `None` for the rest.
    pub needs: &'a [bool],
}

pub type BackwardFn<T> = Box<dyn Fn(&BackwardArgs<'_, T>) -> Result<Vec<Option<Tensor<T>>>> + Send>;

struct Node<T> {
    name: &'static str,
    value: Tensor<T>,
    parents: Vec<Var>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. `requires_grad` leaves receive a gradient on backward.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(Node {
            name: "leaf",
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        })
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].name
    }

    /// Gradient of the last backward root with respect to leaf `v`, if `v`
    /// took part in it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaf_grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`grad`](Self::grad), but non-participating leaves read as zero.
    pub fn grad_or_zero(&self, v: Var) -> Tensor<T> {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(v).to_vec()))
    }

    /// Records the result of an operation.
    ///
    /// The closure is kept only when at least one parent requires a gradient.
    pub fn record(&mut self, name: &'static str, value: Tensor<T>, parents: &[Var], backward: BackwardFn<T>) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Node {
            name,
            value,
            parents: parents.to_vec(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        })
    }

    fn push(&mut self, node: Node<T>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Propagates d(root)/d(node) back to every grad-enabled leaf.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be a scalar, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::ones(root_value.shape().to_vec()));
        self.leaf_grads = (0..self.nodes.len()).map(|_| None).collect();

        for idx in (0..=root.0).rev() {
            let Some(grad) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(backward) = &node.backward else {
                self.leaf_grads[idx] = Some(grad);
                continue;
            };
            let inputs: Vec<&Tensor<T>> = node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let needs: Vec<bool> = node.parents.iter().map(|p| self.nodes[p.0].requires_grad).collect();
            let parent_grads = backward(&BackwardArgs {
                grad: &grad,
                inputs: &inputs,
                output: &node.value,
                needs: &needs,
            })?;
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                if pg.shape() != self.nodes[parent.0].value.shape() {
                    return Err(Error::ShapeMismatch {
                        op: node.name,
                        lhs: pg.shape().to_vec(),
                        rhs: self.nodes[parent.0].value.shape().to_vec(),
                    });
                }
                match &mut grads[parent.0] {
                    Some(acc) => {
                        for (a, g) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += *g;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }
}
