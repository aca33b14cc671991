//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and the handles of
//! its inputs. `backward` walks the tape once in reverse, routing gradients to
//! every node that (transitively) depends on a `requires_grad` leaf.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{self, conv::ConvSpec, sort::SortIndex};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u32);

impl Var {
    pub(crate) fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    MulScalar { x: Var, s: Var },
    Relu(Var),
    Sigmoid(Var),
    Huber(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Permute { x: Var, axes: Vec<usize> },
    Narrow { x: Var, axis: usize, start: usize },
    Concat { xs: Vec<Var>, axis: usize },
    PadRepeat { x: Var, axis: usize },
    MatMul { a: Var, b: Var },
    Softmax { x: Var, axis: usize },
    Attention { q: Var, k: Var, v: Var, scale: f64, probs: Vec<f64> },
    Gather { x: Var, index: SortIndex },
    Scatter { x: Var, index: SortIndex },
    Conv2d { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    LayerNorm { x: Var, scale: Var, shift: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Fft2(Var),
    Resize(Var),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// Recording of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    exhausted: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Trainable input: gradients are collected for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.idx()].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.idx()].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.idx()].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient of the last `backward` loss with respect to leaf `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.idx())?.as_ref()?;
        Some(Tensor::new(self.shape(v), g.clone()).expect("gradient shape"))
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let id = u32::try_from(self.nodes.len()).expect("tape overflow");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(id)
    }

    /// Records an op whose output requires grad iff any input does.
    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|&v| self.nodes[v.idx()].requires_grad);
        self.push_raw(value, op, rg)
    }

    /// Populates gradients of `loss` (a one-element tensor) for every leaf
    /// created with [`Tape::leaf`]. A tape supports exactly one backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.exhausted {
            return Err(Error::TapeExhausted);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.exhausted = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.idx()].requires_grad {
            return Ok(());
        }
        self.grads[loss.idx()] = Some(vec![1.0]);
        for i in (0..=loss.idx()).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let mut sink = GradSink {
                nodes: &self.nodes,
                grads: &mut self.grads,
            };
            ops::backward(&node.op, &node.value, &g, &mut sink);
        }
        Ok(())
    }
}

/// Accumulates input gradients during the reverse sweep.
pub(crate) struct GradSink<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
}

impl<'a> GradSink<'a> {
    pub fn value(&self, v: Var) -> &'a Tensor {
        &self.nodes[v.idx()].value
    }

    /// Mutable gradient buffer of `v`, or `None` if `v` needs no gradient.
    pub fn get(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.nodes[v.idx()];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(self.grads[v.idx()].get_or_insert_with(|| vec![0.0; n]))
    }

    /// Adds `src` into the gradient of `v`.
    pub fn add(&mut self, v: Var, src: &[f64]) {
        if let Some(dst) = self.get(v) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Convenience for ops with the same shape contract.
pub(crate) fn same_shape(tape: &Tape, op: &'static str, a: Var, b: Var) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return crate::error::shape_err(op, tape.shape(a), tape.shape(b));
    }
    Ok(())
}
