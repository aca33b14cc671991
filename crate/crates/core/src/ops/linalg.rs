use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{gemm_nn, gemm_nt, gemm_tn};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{axis_extents, numel, Tensor};

/// Batch layout of a matmul: `a` is `[batch_a, m, k]`, `b` is `[batch_b, k, n]`
/// where a batch count of 1 broadcasts.
struct MatLayout {
    batch: usize,
    a_batched: bool,
    b_batched: bool,
    m: usize,
    k: usize,
    n: usize,
}

fn layout(a: &[usize], b: &[usize]) -> Result<(MatLayout, Vec<usize>)> {
    if a.len() < 2 || b.len() < 2 {
        return shape_err("matmul", a, b);
    }
    let (ra, rb) = (a.len(), b.len());
    let (m, k, k2, n) = (a[ra - 2], a[ra - 1], b[rb - 2], b[rb - 1]);
    if k != k2 {
        return shape_err("matmul", a, b);
    }
    let (ba, bb) = (&a[..ra - 2], &b[..rb - 2]);
    let batch_shape = if ba == bb || bb.is_empty() {
        ba.to_vec()
    } else if ba.is_empty() {
        bb.to_vec()
    } else {
        return shape_err("matmul", a, b);
    };
    let mut out = batch_shape.clone();
    out.extend_from_slice(&[m, n]);
    Ok((
        MatLayout {
            batch: numel(&batch_shape),
            a_batched: !ba.is_empty(),
            b_batched: !bb.is_empty(),
            m,
            k,
            n,
        },
        out,
    ))
}

impl Tape {
    /// Batched matrix product over the trailing two axes. Leading axes must
    /// match, or be absent on one side (broadcast).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (l, out_shape) = layout(self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; l.batch * l.m * l.n];
        for bi in 0..l.batch {
            let ao = if l.a_batched { bi * l.m * l.k } else { 0 };
            let bo = if l.b_batched { bi * l.k * l.n } else { 0 };
            gemm_nn(
                l.m,
                l.k,
                l.n,
                &av[ao..ao + l.m * l.k],
                &bv[bo..bo + l.k * l.n],
                &mut out[bi * l.m * l.n..(bi + 1) * l.m * l.n],
            );
        }
        let v = Tensor::new(&out_shape, out)?;
        Ok(self.push(v, Op::MatMul { a, b }, &[a, b]))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Index {
                op: "softmax",
                index: axis,
                len: shape.len(),
            });
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    max = max.max(src[base + j * inner]);
                }
                let mut total = 0.0;
                for j in 0..n {
                    let e = libm::exp(src[base + j * inner] - max);
                    out[base + j * inner] = e;
                    total += e;
                }
                let inv = 1.0 / total;
                for j in 0..n {
                    out[base + j * inner] *= inv;
                }
            }
        }
        let v = Tensor::new(&shape, out)?;
        Ok(self.push(v, Op::Softmax { x, axis }, &[x]))
    }
}

pub(crate) fn backward(op: &Op, out: &Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    match *op {
        Op::MatMul { a, b } => {
            let (l, _) = layout(sink.value(a).shape(), sink.value(b).shape()).expect("recorded shapes");
            let (mk, kn, mn) = (l.m * l.k, l.k * l.n, l.m * l.n);
            // dA = dC * B^T
            let av = sink.value(a).data();
            let bv = sink.value(b).data();
            if let Some(da) = sink.get(a) {
                for bi in 0..l.batch {
                    let ao = if l.a_batched { bi * mk } else { 0 };
                    let bo = if l.b_batched { bi * kn } else { 0 };
                    gemm_nt(l.m, l.n, l.k, &g[bi * mn..(bi + 1) * mn], &bv[bo..bo + kn], &mut da[ao..ao + mk]);
                }
            }
            // dB = A^T * dC
            if let Some(db) = sink.get(b) {
                for bi in 0..l.batch {
                    let ao = if l.a_batched { bi * mk } else { 0 };
                    let bo = if l.b_batched { bi * kn } else { 0 };
                    gemm_tn(l.k, l.m, l.n, &av[ao..ao + mk], &g[bi * mn..(bi + 1) * mn], &mut db[bo..bo + kn]);
                }
            }
        }
        Op::Softmax { x, axis } => {
            let (outer, n, inner) = axis_extents(out.shape(), axis);
            let y = out.data();
            if let Some(d) = sink.get(x) {
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * n * inner + i;
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[base + j * inner] * y[base + j * inner];
                        }
                        for j in 0..n {
                            let p = base + j * inner;
                            d[p] += y[p] * (g[p] - s);
                        }
                    }
                }
            }
        }
        _ => unreachable!("not a linalg op"),
    }
}
