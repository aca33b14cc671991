//! Stable sorting with recorded permutations, and the gather/scatter pair
//! that applies a permutation and its inverse.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{shape_err, Error, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{axis_extents, numel, Tensor};

/// Per-slice permutation along one axis.
///
/// `order` has the layout of the tensor it indexes: at every position it holds
/// the source coordinate along `axis` of the element placed there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortIndex {
    axis: usize,
    shape: Vec<usize>,
    order: Vec<u32>,
}

impl SortIndex {
    /// Validates that every slice along `axis` is a bijection on `0..n`.
    pub fn from_order(shape: &[usize], axis: usize, order: Vec<u32>) -> Result<Self> {
        if axis >= shape.len() || numel(shape) != order.len() {
            return shape_err("SortIndex", shape, &[order.len()]);
        }
        let (outer, n, inner) = axis_extents(shape, axis);
        let mut seen = vec![false; n];
        for o in 0..outer {
            for i in 0..inner {
                seen.iter_mut().for_each(|s| *s = false);
                for j in 0..n {
                    let src = order[(o * n + j) * inner + i] as usize;
                    if src >= n {
                        return Err(Error::Index { op: "gather", index: src, len: n });
                    }
                    if core::mem::replace(&mut seen[src], true) {
                        return Err(Error::Contract(alloc::format!(
                            "order repeats index {src} along axis {axis}"
                        )));
                    }
                }
            }
        }
        Ok(SortIndex {
            axis,
            shape: shape.to_vec(),
            order,
        })
    }

    pub fn identity(shape: &[usize], axis: usize) -> Self {
        let (outer, n, inner) = axis_extents(shape, axis);
        let mut order = Vec::with_capacity(numel(shape));
        for _ in 0..outer {
            for j in 0..n {
                order.extend(core::iter::repeat(j as u32).take(inner));
            }
        }
        SortIndex {
            axis,
            shape: shape.to_vec(),
            order,
        }
    }

    /// Stable ascending order of `x` along `axis`; ties keep input order and
    /// `-0.0` ties with `+0.0`.
    pub fn ascending(x: &Tensor, axis: usize) -> Result<Self> {
        let shape = x.shape();
        if axis >= shape.len() {
            return Err(Error::Index { op: "sort", index: axis, len: shape.len() });
        }
        let (outer, n, inner) = axis_extents(shape, axis);
        let data = x.data();
        let mut order = vec![0u32; data.len()];
        let mut perm: Vec<u32> = Vec::with_capacity(n);
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: u32| data[(o * n + j as usize) * inner + i] + 0.0;
                perm.clear();
                perm.extend(0..n as u32);
                perm.sort_by(|&a, &b| at(a).partial_cmp(&at(b)).unwrap_or(Ordering::Equal));
                for (j, &src) in perm.iter().enumerate() {
                    order[(o * n + j) * inner + i] = src;
                }
            }
        }
        Ok(SortIndex {
            axis,
            shape: shape.to_vec(),
            order,
        })
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Stacks `reps` copies along axis 0 (which must not be the sorted axis).
    pub fn repeat_outer(&self, reps: usize) -> Result<Self> {
        if self.axis == 0 {
            return Err(Error::Contract("cannot repeat along the sorted axis".into()));
        }
        let mut shape = self.shape.clone();
        shape[0] *= reps;
        let mut order = Vec::with_capacity(self.order.len() * reps);
        for _ in 0..reps {
            order.extend_from_slice(&self.order);
        }
        Ok(SortIndex {
            axis: self.axis,
            shape,
            order,
        })
    }

    /// `out[pos] = src[pos with axis coordinate order[pos]]`.
    pub fn gather_slice(&self, src: &[f64]) -> Vec<f64> {
        let (outer, n, inner) = axis_extents(&self.shape, self.axis);
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    let p = (o * n + j) * inner + i;
                    out[p] = src[(o * n + self.order[p] as usize) * inner + i];
                }
            }
        }
        out
    }

    /// Inverse of [`SortIndex::gather_slice`].
    pub fn scatter_slice(&self, src: &[f64]) -> Vec<f64> {
        let (outer, n, inner) = axis_extents(&self.shape, self.axis);
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    let p = (o * n + j) * inner + i;
                    out[(o * n + self.order[p] as usize) * inner + i] = src[p];
                }
            }
        }
        out
    }

    fn check(&self, op: &'static str, shape: &[usize]) -> Result<()> {
        if shape != self.shape.as_slice() {
            return shape_err(op, shape, &self.shape);
        }
        Ok(())
    }
}

impl Tape {
    /// Sorts ascending along `axis` and returns the permutation used.
    pub fn sort_with_index(&mut self, x: Var, axis: usize) -> Result<(Var, SortIndex)> {
        let index = SortIndex::ascending(self.value(x), axis)?;
        let y = self.gather(x, &index)?;
        Ok((y, index))
    }

    /// Applies `index`: `out[i] = x[order[i]]` within each slice.
    pub fn gather(&mut self, x: Var, index: &SortIndex) -> Result<Var> {
        index.check("gather", self.shape(x))?;
        let data = index.gather_slice(self.value(x).data());
        let v = Tensor::new(self.shape(x), data)?;
        Ok(self.push(v, Op::Gather { x, index: index.clone() }, &[x]))
    }

    /// Undoes [`Tape::gather`] with the same index (scatter back).
    pub fn scatter(&mut self, x: Var, index: &SortIndex) -> Result<Var> {
        index.check("scatter", self.shape(x))?;
        let data = index.scatter_slice(self.value(x).data());
        let v = Tensor::new(self.shape(x), data)?;
        Ok(self.push(v, Op::Scatter { x, index: index.clone() }, &[x]))
    }
}

pub(crate) fn backward(op: &Op, g: &[f64], sink: &mut GradSink<'_>) {
    match op {
        Op::Gather { x, index } => sink.add(*x, &index.scatter_slice(g)),
        Op::Scatter { x, index } => sink.add(*x, &index.gather_slice(g)),
        _ => unreachable!("not a permutation op"),
    }
}
