use alloc::vec;

use crate::error::{shape_err, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::Tensor;

pub const LAYERNORM_EPS: f64 = 1e-6;

impl Tape {
    /// Normalizes over the channel axis (axis 0) at every position, then
    /// applies per-channel `scale` and `shift`.
    pub fn layernorm(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = shape[0];
        if self.shape(scale) != [c] || self.shape(shift) != [c] {
            return shape_err("layernorm", &shape, self.shape(scale));
        }
        let n = shape[1..].iter().product::<usize>();
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(scale).data(), self.value(shift).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; n];
        let mut out = vec![0.0; xv.len()];
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        for ch in 0..c {
            for (m, v) in mean.iter_mut().zip(&xv[ch * n..(ch + 1) * n]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= c as f64);
        for ch in 0..c {
            for ((s, v), m) in var.iter_mut().zip(&xv[ch * n..(ch + 1) * n]).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for (r, v) in rstd.iter_mut().zip(&var) {
            *r = 1.0 / libm::sqrt(v / c as f64 + LAYERNORM_EPS);
        }
        for ch in 0..c {
            for p in 0..n {
                let i = ch * n + p;
                xhat[i] = (xv[i] - mean[p]) * rstd[p];
                out[i] = xhat[i] * gv[ch] + bv[ch];
            }
        }
        let v = Tensor::new(&shape, out)?;
        Ok(self.push(v, Op::LayerNorm { x, scale, shift, xhat, rstd }, &[x, scale, shift]))
    }
}

pub(crate) fn backward(op: &Op, g: &[f64], sink: &mut GradSink<'_>) {
    let Op::LayerNorm { x, scale, shift, xhat, rstd } = op else {
        unreachable!("not a layernorm op")
    };
    let n = rstd.len();
    let c = xhat.len() / n;
    let gamma = sink.value(*scale).data();
    if let Some(d) = sink.get(*shift) {
        for ch in 0..c {
            d[ch] += g[ch * n..(ch + 1) * n].iter().sum::<f64>();
        }
    }
    if let Some(d) = sink.get(*scale) {
        for ch in 0..c {
            d[ch] += g[ch * n..(ch + 1) * n]
                .iter()
                .zip(&xhat[ch * n..(ch + 1) * n])
                .map(|(g, h)| g * h)
                .sum::<f64>();
        }
    }
    if let Some(dx) = sink.get(*x) {
        let mut mean_g = vec![0.0; n];
        let mut mean_gx = vec![0.0; n];
        for ch in 0..c {
            for p in 0..n {
                let gh = g[ch * n + p] * gamma[ch];
                mean_g[p] += gh;
                mean_gx[p] += gh * xhat[ch * n + p];
            }
        }
        for ch in 0..c {
            for p in 0..n {
                let i = ch * n + p;
                let gh = g[i] * gamma[ch];
                dx[i] += rstd[p] * (gh - mean_g[p] / c as f64 - xhat[i] * mean_gx[p] / c as f64);
            }
        }
    }
}
