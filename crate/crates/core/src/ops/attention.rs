//! Fused scaled dot-product attention over channel-major token maps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::kernels::{axpy, dot};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{numel, Tensor};

struct Dims {
    batch: usize,
    d: usize,
    nq: usize,
    nk: usize,
}

fn dims(q: &[usize], k: &[usize], v: &[usize]) -> Result<Dims> {
    let r = q.len();
    if r < 2 || k != v || k.len() != r || q[..r - 1] != k[..r - 1] {
        return shape_err("attention", q, k);
    }
    Ok(Dims { batch: numel(&q[..r - 2]), d: q[r - 2], nq: q[r - 1], nk: k[r - 1] })
}

fn softmax_row(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - m);
        z += *x;
    }
    let inv = 1.0 / z;
    row.iter_mut().for_each(|x| *x *= inv);
}

impl Tape {
    /// `softmax(scale * qᵀk) vᵀ` per batch, in channel-major layout:
    /// `q: [.., d, Nq]`, `k, v: [.., d, Nk]`, output `[.., d, Nq]`. Softmax runs
    /// over the key axis.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, scale: f64) -> Result<Var> {
        let s = dims(self.shape(q), self.shape(k), self.shape(v))?;
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![0.0; s.batch * s.nq * s.nk];
        let mut out = vec![0.0; s.batch * s.d * s.nq];
        for b in 0..s.batch {
            let (qb, kb, vb) = (&qd[b * s.d * s.nq..], &kd[b * s.d * s.nk..], &vd[b * s.d * s.nk..]);
            for i in 0..s.nq {
                let row = &mut probs[(b * s.nq + i) * s.nk..(b * s.nq + i + 1) * s.nk];
                for e in 0..s.d {
                    axpy(row, scale * qb[e * s.nq + i], &kb[e * s.nk..(e + 1) * s.nk]);
                }
                softmax_row(row);
                for e in 0..s.d {
                    out[(b * s.d + e) * s.nq + i] = dot(row, &vb[e * s.nk..(e + 1) * s.nk]);
                }
            }
        }
        let value = Tensor::new(self.shape(q), out)?;
        Ok(self.push(value, Op::Attention { q, k, v, scale, probs }, &[q, k, v]))
    }
}

pub(crate) fn backward(op: &Op, g: &[f64], sink: &mut GradSink<'_>) {
    let Op::Attention { q, k, v, scale, probs } = op else {
        unreachable!("not an attention op")
    };
    let (qt, kt, vt) = (sink.value(*q), sink.value(*k), sink.value(*v));
    let s = dims(qt.shape(), kt.shape(), vt.shape()).expect("checked in forward");
    let (qd, kd, vd) = (qt.data(), kt.data(), vt.data());
    let mut gq = vec![0.0; qd.len()];
    let mut gk = vec![0.0; kd.len()];
    let mut gv = vec![0.0; vd.len()];
    let mut gs: Vec<f64> = vec![0.0; s.nk];
    for b in 0..s.batch {
        let (qo, ko) = (b * s.d * s.nq, b * s.d * s.nk);
        for i in 0..s.nq {
            let row = &probs[(b * s.nq + i) * s.nk..(b * s.nq + i + 1) * s.nk];
            gs.iter_mut().for_each(|x| *x = 0.0);
            for e in 0..s.d {
                let go = g[qo + e * s.nq + i];
                let span = ko + e * s.nk..ko + (e + 1) * s.nk;
                axpy(&mut gs, go, &vd[span.clone()]);
                axpy(&mut gv[span], go, row);
            }
            let c = dot(row, &gs);
            for (x, p) in gs.iter_mut().zip(row) {
                *x = scale * p * (*x - c);
            }
            for e in 0..s.d {
                let span = ko + e * s.nk..ko + (e + 1) * s.nk;
                gq[qo + e * s.nq + i] += dot(&gs, &kd[span.clone()]);
                axpy(&mut gk[span], qd[qo + e * s.nq + i], &gs);
            }
        }
    }
    sink.add(*q, &gq);
    sink.add(*k, &gk);
    sink.add(*v, &gv);
}
