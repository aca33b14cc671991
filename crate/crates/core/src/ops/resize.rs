use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::Tensor;

/// Two-tap bilinear weights along one axis (half-pixel centers, edge clamp).
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
            let i0 = (libm::floor(pos) as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

fn apply(x: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let (ty, tx) = (taps(h, oh), taps(w, ow));
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let p = &x[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    out
}

impl Tape {
    /// Bilinear resampling of `[C, H, W]` to `[C, out_h, out_w]`.
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || out_h == 0 || out_w == 0 {
            return shape_err("resize_bilinear", &s, &[out_h, out_w]);
        }
        let data = apply(self.value(x).data(), s[0], s[1], s[2], out_h, out_w);
        let v = Tensor::new(&[s[0], out_h, out_w], data)?;
        Ok(self.push(v, Op::Resize(x), &[x]))
    }

    /// Halves height and width.
    pub fn downsample2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        self.resize_bilinear(x, s[1] / 2, s[2] / 2)
    }

    /// Doubles height and width.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        self.resize_bilinear(x, s[1] * 2, s[2] * 2)
    }
}

pub(crate) fn backward(op: &Op, out: &Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    let Op::Resize(x) = *op else { unreachable!("not a resize op") };
    let s = sink.value(x).shape().to_vec();
    let (c, h, w) = (s[0], s[1], s[2]);
    let (oh, ow) = (out.shape()[1], out.shape()[2]);
    let (ty, tx) = (taps(h, oh), taps(w, ow));
    if let Some(dx) = sink.get(x) {
        let mut k = 0;
        for ch in 0..c {
            let p = &mut dx[ch * h * w..(ch + 1) * h * w];
            for &(y0, y1, fy) in &ty {
                for &(x0, x1, fx) in &tx {
                    let gv = g[k];
                    k += 1;
                    p[y0 * w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                    p[y0 * w + x1] += gv * (1.0 - fy) * fx;
                    p[y1 * w + x0] += gv * fy * (1.0 - fx);
                    p[y1 * w + x1] += gv * fy * fx;
                }
            }
        }
    }
}
