//! Differentiable primitives, grouped by kind. Each submodule adds forward
//! methods to [`Tape`](crate::Tape) and supplies the matching backward rule.

pub mod attention;
pub mod conv;
pub mod elementwise;
pub mod fft;
pub mod linalg;
pub mod norm;
pub mod resize;
pub mod shape;
pub mod sort;

use crate::tape::{GradSink, Op};
use crate::tensor::Tensor;

pub(crate) fn backward(op: &Op, out: &Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    match op {
        Op::Leaf => {}
        Op::Add(..)
        | Op::Sub(..)
        | Op::Mul(..)
        | Op::Affine(..)
        | Op::MulScalar { .. }
        | Op::Relu(_)
        | Op::Sigmoid(_)
        | Op::Huber(_)
        | Op::Sum(_)
        | Op::Mean(_) => elementwise::backward(op, out, g, sink),
        Op::Reshape(_)
        | Op::Permute { .. }
        | Op::Narrow { .. }
        | Op::Concat { .. }
        | Op::PadRepeat { .. } => shape::backward(op, out, g, sink),
        Op::MatMul { .. } | Op::Softmax { .. } => linalg::backward(op, out, g, sink),
        Op::Attention { .. } => attention::backward(op, g, sink),
        Op::Gather { .. } | Op::Scatter { .. } => sort::backward(op, g, sink),
        Op::Conv2d { .. } => conv::backward(op, out, g, sink),
        Op::LayerNorm { .. } => norm::backward(op, g, sink),
        Op::Fft2(_) => fft::backward(op, out, g, sink),
        Op::Resize(_) => resize::backward(op, out, g, sink),
    }
}
