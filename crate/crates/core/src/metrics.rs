//! Image fidelity metrics.

use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// SSIM stabilizers at unit peak.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err("metric", a.shape(), b.shape());
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.numel() as f64)
}

/// `10 log10(peak^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(peak * peak / m))
}

/// Channel-mean grayscale of `[C, H, W]` (or a plain `[H, W]` map).
fn gray(x: &Tensor) -> Result<(usize, usize, Vec<f64>)> {
    match *x.shape() {
        [h, w] => Ok((h, w, x.data().to_vec())),
        [c, h, w] => {
            let n = h * w;
            let mut g = alloc::vec![0.0; n];
            for ch in 0..c {
                g.iter_mut().zip(&x.data()[ch * n..(ch + 1) * n]).for_each(|(g, v)| *g += v);
            }
            g.iter_mut().for_each(|v| *v /= c as f64);
            Ok((h, w, g))
        }
        _ => shape_err("ssim", x.shape(), &[3]),
    }
}

/// Mean SSIM over 8x8 windows at stride 4 of the grayscale images.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w, ga) = gray(a)?;
    let (_, _, gb) = gray(b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Config("SSIM needs images of at least 8x8".into()));
    }
    let k = SSIM_WINDOW;
    let area = (k * k) as f64;
    let (mut total, mut count) = (0.0, 0usize);
    for i in (0..=h - k).step_by(SSIM_STRIDE) {
        for j in (0..=w - k).step_by(SSIM_STRIDE) {
            let (mut sa, mut sb) = (0.0, 0.0);
            for y in i..i + k {
                for x in j..j + k {
                    sa += ga[y * w + x];
                    sb += gb[y * w + x];
                }
            }
            let (ma, mb) = (sa / area, sb / area);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for y in i..i + k {
                for x in j..j + k {
                    let (da, db) = (ga[y * w + x] - ma, gb[y * w + x] - mb);
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / area, vb / area, cov / area);
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
