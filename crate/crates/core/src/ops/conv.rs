//! Same-padded 2-D convolution on `[C, H, W]` maps.

use alloc::vec;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{axpy, dot, gemm_nn, gemm_nt, gemm_tn};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Full channel mixing; weight `[C_out, C_in, k, k]`. Pointwise is `k = 1`.
    Dense,
    /// One filter per channel; weight `[C, 1, k, k]`.
    Depthwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub mode: ConvMode,
    pub ksize: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(mode: ConvMode, ksize: usize, stride: usize) -> Result<Self> {
        if !matches!(ksize, 1 | 3 | 5 | 7) {
            return Err(Error::Config(alloc::format!(
                "unsupported kernel size {ksize}; expected 1, 3, 5 or 7"
            )));
        }
        if !matches!(stride, 1 | 2) {
            return Err(Error::Config(alloc::format!("unsupported stride {stride}")));
        }
        Ok(ConvSpec { mode, ksize, stride })
    }

    pub fn pointwise() -> Self {
        ConvSpec { mode: ConvMode::Dense, ksize: 1, stride: 1 }
    }

    pub fn depthwise(ksize: usize) -> Result<Self> {
        Self::new(ConvMode::Depthwise, ksize, 1)
    }

    pub fn dense(ksize: usize) -> Result<Self> {
        Self::new(ConvMode::Dense, ksize, 1)
    }

    /// Weight shape for the given channel counts.
    pub fn weight_shape(&self, c_in: usize, c_out: usize) -> [usize; 4] {
        match self.mode {
            ConvMode::Dense => [c_out, c_in, self.ksize, self.ksize],
            ConvMode::Depthwise => [c_in, 1, self.ksize, self.ksize],
        }
    }
}

struct Geometry {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    k: usize,
    s: usize,
    pad: usize,
}

impl Geometry {
    fn new(x: &[usize], w: &[usize], spec: &ConvSpec) -> Result<Self> {
        if x.len() != 3 || w.len() != 4 || w[2] != spec.ksize || w[3] != spec.ksize {
            return shape_err("conv2d", x, w);
        }
        let (c_in, h, wd) = (x[0], x[1], x[2]);
        let c_out = match spec.mode {
            ConvMode::Dense if w[1] == c_in => w[0],
            ConvMode::Depthwise if w[0] == c_in && w[1] == 1 => c_in,
            _ => return shape_err("conv2d", x, w),
        };
        if spec.stride == 2 && (h % 2 != 0 || wd % 2 != 0) {
            return shape_err("conv2d(stride 2)", x, w);
        }
        Ok(Geometry {
            c_in,
            c_out,
            h,
            w: wd,
            oh: h / spec.stride,
            ow: wd / spec.stride,
            k: spec.ksize,
            s: spec.stride,
            pad: spec.ksize / 2,
        })
    }

    /// Output index range along one axis for which tap `t` reads inside the input.
    fn valid(&self, t: usize, len: usize, out_len: usize) -> (usize, usize) {
        // need 0 <= o*s + t - pad < len
        let lo = if t >= self.pad { 0 } else { (self.pad - t).div_ceil(self.s) };
        let hi_num = len as isize - 1 + self.pad as isize - t as isize;
        let hi = if hi_num < 0 { 0 } else { (hi_num as usize / self.s + 1).min(out_len) };
        (lo.min(hi), hi)
    }

    /// Visits every (input plane, output plane) tap pair.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        for ky in 0..self.k {
            let (y0, y1) = self.valid(ky, self.h, self.oh);
            for kx in 0..self.k {
                let (x0, x1) = self.valid(kx, self.w, self.ow);
                if y0 < y1 && x0 < x1 {
                    f(ky, kx, y0, y1, x0, x1);
                }
            }
        }
    }
}

impl Tape {
    /// Same-padded convolution of `x: [C_in, H, W]` with optional bias `[C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let geo = Geometry::new(self.shape(x), self.shape(w), &spec)?;
        if let Some(b) = b {
            if self.shape(b) != [geo.c_out] {
                return shape_err("conv2d bias", self.shape(b), &[geo.c_out]);
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let plane = geo.oh * geo.ow;
        let mut out = vec![0.0; geo.c_out * plane];
        if let Some(b) = b {
            for (c, &bias) in self.value(b).data().iter().enumerate() {
                out[c * plane..(c + 1) * plane].iter_mut().for_each(|o| *o = bias);
            }
        }
        if spec.mode == ConvMode::Dense && geo.k == 1 && geo.s == 1 {
            gemm_nn(geo.c_out, geo.c_in, plane, wv, xv, &mut out);
        } else {
            conv_forward(&geo, spec.mode, xv, wv, &mut out);
        }
        let v = Tensor::new(&[geo.c_out, geo.oh, geo.ow], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(v, Op::Conv2d { x, w, b, spec }, &inputs))
    }
}

fn pairs(geo: &Geometry, mode: ConvMode) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    // (output channel, input channel, weight offset of the k x k filter)
    let kk = geo.k * geo.k;
    let dense = mode == ConvMode::Dense;
    (0..geo.c_out).flat_map(move |co| {
        let (lo, hi) = if dense { (0, geo.c_in) } else { (co, co + 1) };
        (lo..hi).map(move |ci| {
            let woff = if dense { (co * geo.c_in + ci) * kk } else { co * kk };
            (co, ci, woff)
        })
    })
}

fn conv_forward(geo: &Geometry, mode: ConvMode, x: &[f64], w: &[f64], out: &mut [f64]) {
    let (ip, op) = (geo.h * geo.w, geo.oh * geo.ow);
    for (co, ci, woff) in pairs(geo, mode) {
        let xin = &x[ci * ip..(ci + 1) * ip];
        let o = &mut out[co * op..(co + 1) * op];
        geo.for_each_tap(|ky, kx, y0, y1, x0, x1| {
            let wt = w[woff + ky * geo.k + kx];
            if wt == 0.0 {
                return;
            }
            for oy in y0..y1 {
                let iy = oy * geo.s + ky - geo.pad;
                let orow = &mut o[oy * geo.ow..];
                let irow = &xin[iy * geo.w..];
                if geo.s == 1 {
                    let shift = kx as isize - geo.pad as isize;
                    let src = &irow[(x0 as isize + shift) as usize..(x1 as isize + shift) as usize];
                    for (d, s) in orow[x0..x1].iter_mut().zip(src) {
                        *d += wt * s;
                    }
                } else {
                    for ox in x0..x1 {
                        orow[ox] += wt * irow[ox * geo.s + kx - geo.pad];
                    }
                }
            }
        });
    }
}

pub(crate) fn backward(op: &Op, out: &Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    let Op::Conv2d { x, w, b, spec } = *op else {
        unreachable!("not a conv op")
    };
    let xv = sink.value(x);
    let wv = sink.value(w);
    let geo = Geometry::new(xv.shape(), wv.shape(), &spec).expect("recorded shapes");
    let (ip, op_) = (geo.h * geo.w, geo.oh * geo.ow);
    debug_assert_eq!(out.numel(), geo.c_out * op_);
    if let Some(b) = b {
        if let Some(db) = sink.get(b) {
            for (c, d) in db.iter_mut().enumerate() {
                *d += g[c * op_..(c + 1) * op_].iter().sum::<f64>();
            }
        }
    }
    let pointwise = spec.mode == ConvMode::Dense && geo.k == 1 && geo.s == 1;
    if let Some(dw) = sink.get(w) {
        if pointwise {
            // dW = dY * X^T
            gemm_nt(geo.c_out, op_, geo.c_in, g, xv.data(), dw);
        } else {
            for (co, ci, woff) in pairs(&geo, spec.mode) {
                let xin = &xv.data()[ci * ip..(ci + 1) * ip];
                let go = &g[co * op_..(co + 1) * op_];
                geo.for_each_tap(|ky, kx, y0, y1, x0, x1| {
                    let mut acc = 0.0;
                    for oy in y0..y1 {
                        let iy = oy * geo.s + ky - geo.pad;
                        let grow = &go[oy * geo.ow..];
                        let irow = &xin[iy * geo.w..];
                        if geo.s == 1 {
                            let lo = x0 + kx - geo.pad;
                            acc += dot(&grow[x0..x1], &irow[lo..lo + x1 - x0]);
                        } else {
                            for ox in x0..x1 {
                                acc += grow[ox] * irow[ox * geo.s + kx - geo.pad];
                            }
                        }
                    }
                    dw[woff + ky * geo.k + kx] += acc;
                });
            }
        }
    }
    if let Some(dx) = sink.get(x) {
        if pointwise {
            // dX = W^T * dY
            gemm_tn(geo.c_in, geo.c_out, op_, wv.data(), g, dx);
        } else {
            for (co, ci, woff) in pairs(&geo, spec.mode) {
                let go = &g[co * op_..(co + 1) * op_];
                let dxi = &mut dx[ci * ip..(ci + 1) * ip];
                geo.for_each_tap(|ky, kx, y0, y1, x0, x1| {
                    let wt = wv.data()[woff + ky * geo.k + kx];
                    if wt == 0.0 {
                        return;
                    }
                    for oy in y0..y1 {
                        let iy = oy * geo.s + ky - geo.pad;
                        let grow = &go[oy * geo.ow..];
                        let drow = &mut dxi[iy * geo.w..];
                        if geo.s == 1 {
                            let lo = x0 + kx - geo.pad;
                            axpy(&mut drow[lo..lo + x1 - x0], wt, &grow[x0..x1]);
                        } else {
                            for ox in x0..x1 {
                                drow[ox * geo.s + kx - geo.pad] += wt * grow[ox];
                            }
                        }
                    }
                });
            }
        }
    }
}
