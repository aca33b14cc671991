use alloc::vec;

use crate::error::{Error, Result};
use crate::kernels::fft2_plane;
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::Tensor;

/// Unnormalized 2-D DFT of each plane of a real `[C, H, W]` tensor, returned as
/// `[C, 2, H, W]` with real and imaginary planes.
pub fn fft2_realimag(x: &Tensor) -> Result<Tensor> {
    let shape = x.shape();
    check_pow2(shape)?;
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let plane = h * w;
    let mut out = vec![0.0; c * 2 * plane];
    for ch in 0..c {
        let (re, im) = out[ch * 2 * plane..(ch + 1) * 2 * plane].split_at_mut(plane);
        re.copy_from_slice(x.channel(ch));
        fft2_plane(re, im, h, w, false);
    }
    Tensor::new(&[c, 2, h, w], out)
}

fn check_pow2(shape: &[usize]) -> Result<()> {
    if shape.len() != 3 {
        return Err(Error::Contract(alloc::format!("fft2 expects [C, H, W], got {shape:?}")));
    }
    if !shape[1].is_power_of_two() || !shape[2].is_power_of_two() {
        return Err(Error::Config(alloc::format!(
            "FFT requires power-of-two height and width, got {}x{}",
            shape[1], shape[2]
        )));
    }
    Ok(())
}

impl Tape {
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let v = fft2_realimag(self.value(x))?;
        Ok(self.push(v, Op::Fft2(x), &[x]))
    }
}

pub(crate) fn backward(op: &Op, out: &Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    let Op::Fft2(x) = *op else { unreachable!("not an fft op") };
    let shape = out.shape();
    let (c, h, w) = (shape[0], shape[2], shape[3]);
    let plane = h * w;
    if let Some(dx) = sink.get(x) {
        // For real input, dL/dx = Re(DFT(conj(g))).
        let mut re = vec![0.0; plane];
        let mut im = vec![0.0; plane];
        for ch in 0..c {
            let gc = &g[ch * 2 * plane..(ch + 1) * 2 * plane];
            re.copy_from_slice(&gc[..plane]);
            for (d, s) in im.iter_mut().zip(&gc[plane..]) {
                *d = -s;
            }
            fft2_plane(&mut re, &mut im, h, w, false);
            for (d, r) in dx[ch * plane..(ch + 1) * plane].iter_mut().zip(&re) {
                *d += r;
            }
        }
    }
}
