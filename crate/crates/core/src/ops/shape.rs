use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::kernels::transpose2;
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{axis_extents, numel, strides, Tensor};

impl Tape {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || core::mem::replace(&mut seen[a], true)) {
            return shape_err("permute", &shape, axes);
        }
        let data = permute_data(self.value(x).data(), &shape, axes);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let v = Tensor::new(&out_shape, data)?;
        Ok(self.push(v, Op::Permute { x, axes: axes.to_vec() }, &[x]))
    }

    /// Swaps the trailing two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let r = self.shape(x).len();
        if r < 2 {
            return shape_err("transpose", self.shape(x), &[]);
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(x, &axes)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Index {
                op: "narrow",
                index: start + len,
                len: shape.get(axis).copied().unwrap_or(0),
            });
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let v = Tensor::new(&out_shape, data)?;
        Ok(self.push(v, Op::Narrow { x, axis, start }, &[x]))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*xs.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?)
            .to_vec();
        if axis >= first.len() {
            return shape_err("concat", &first, &[axis]);
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return shape_err("concat", &first, s);
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_extents(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let len = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut out_shape = first;
        out_shape[axis] = total;
        let v = Tensor::new(&out_shape, data)?;
        Ok(self.push(v, Op::Concat { xs: xs.to_vec(), axis }, xs))
    }

    /// Extends `axis` by `extra` copies of its last element.
    pub fn pad_repeat_last(&mut self, x: Var, axis: usize, extra: usize) -> Result<Var> {
        if extra == 0 {
            return Ok(x);
        }
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return shape_err("pad_repeat_last", &shape, &[axis]);
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * (n + extra) * inner);
        for o in 0..outer {
            let base = o * n * inner;
            data.extend_from_slice(&src[base..base + n * inner]);
            let last = &src[base + (n - 1) * inner..base + n * inner];
            for _ in 0..extra {
                data.extend_from_slice(last);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = n + extra;
        let v = Tensor::new(&out_shape, data)?;
        Ok(self.push(v, Op::PadRepeat { x, axis }, &[x]))
    }
}

pub(crate) fn permute_data(src: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let r = shape.len();
    // Fast path: swap of the trailing two axes.
    if r >= 2 && axes[..r - 2].iter().enumerate().all(|(i, &a)| i == a) && axes[r - 2] == r - 1 && axes[r - 1] == r - 2 {
        let batch = numel(&shape[..r - 2]);
        let mut out = vec![0.0; src.len()];
        transpose2(batch, shape[r - 2], shape[r - 1], src, &mut out);
        return out;
    }
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_stride: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; r];
    let last = r - 1;
    let (inner_len, inner_stride) = (out_shape[last], src_stride[last]);
    let mut offset = 0usize;
    loop {
        for k in 0..inner_len {
            out.push(src[offset + k * inner_stride]);
        }
        // Increment the multi-index over all but the last axis.
        let mut ax = last;
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            offset += src_stride[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= src_stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

pub(crate) fn backward(op: &Op, out: &Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    match op {
        Op::Reshape(x) => sink.add(*x, g),
        Op::Permute { x, axes } => {
            let mut inverse = vec![0; axes.len()];
            for (i, &a) in axes.iter().enumerate() {
                inverse[a] = i;
            }
            let gx = permute_data(g, out.shape(), &inverse);
            sink.add(*x, &gx);
        }
        Op::Narrow { x, axis, start } => {
            let in_shape = sink.value(*x).shape().to_vec();
            let (outer, n, inner) = axis_extents(&in_shape, *axis);
            let len = out.shape()[*axis];
            if let Some(d) = sink.get(*x) {
                for o in 0..outer {
                    let dst = &mut d[o * n * inner + start * inner..][..len * inner];
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
            }
        }
        Op::Concat { xs, axis } => {
            let (outer, total, inner) = axis_extents(out.shape(), *axis);
            let mut at = 0;
            for &v in xs {
                let len = sink.value(v).shape()[*axis];
                if let Some(d) = sink.get(v) {
                    for o in 0..outer {
                        let src = &g[(o * total + at) * inner..][..len * inner];
                        let dst = &mut d[o * len * inner..(o + 1) * len * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
                at += len;
            }
        }
        Op::PadRepeat { x, axis } => {
            let in_shape = sink.value(*x).shape().to_vec();
            let (outer, n, inner) = axis_extents(&in_shape, *axis);
            let padded = out.shape()[*axis];
            if let Some(d) = sink.get(*x) {
                for o in 0..outer {
                    for i in 0..padded {
                        let src = &g[(o * padded + i) * inner..][..inner];
                        let dst = &mut d[(o * n + i.min(n - 1)) * inner..][..inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
            }
        }
        _ => unreachable!("not a shape op"),
    }
}
