//! Seeded procedural clean scenes and smooth noise fields.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Low-frequency value noise in `[0, 1]`: a random `cells + 1` lattice
/// interpolated bilinearly with a smoothstep fade.
pub fn smooth_noise(h: usize, w: usize, cells: usize, rng: &mut SeededRng) -> Vec<f64> {
    let g = cells.max(1) + 1;
    let lattice: Vec<f64> = (0..g * g).map(|_| rng.uniform()).collect();
    let fade = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        let y = i as f64 / h as f64 * (g - 1) as f64;
        let (y0, fy) = (y as usize, fade(y - libm::floor(y)));
        for j in 0..w {
            let x = j as f64 / w as f64 * (g - 1) as f64;
            let (x0, fx) = (x as usize, fade(x - libm::floor(x)));
            let at = |a: usize, b: usize| lattice[a * g + b];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out[i * w + j] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

fn color(rng: &mut SeededRng) -> [f64; 3] {
    [rng.uniform(), rng.uniform(), rng.uniform()]
}

/// A clean `[3, size, size]` image: two-colour gradient, a few flat
/// rectangles and discs, and a sinusoidal texture.
pub fn scene(size: usize, rng: &mut SeededRng) -> Tensor {
    let n = size * size;
    let s = size as f64;
    let mut img = vec![0.0; 3 * n];
    let (c0, c1) = (color(rng), color(rng));
    let angle = rng.range(0.0, core::f64::consts::TAU);
    let (dx, dy) = (libm::cos(angle), libm::sin(angle));
    for i in 0..size {
        for j in 0..size {
            let u = 0.5 + 0.5 * ((j as f64 / s - 0.5) * dx + (i as f64 / s - 0.5) * dy) * core::f64::consts::SQRT_2;
            for c in 0..3 {
                img[c * n + i * size + j] = c0[c] * (1.0 - u) + c1[c] * u;
            }
        }
    }
    for _ in 0..2 + rng.below(3) {
        let col = color(rng);
        let (cy, cx) = (rng.range(0.0, s), rng.range(0.0, s));
        let (ry, rx) = (rng.range(0.08, 0.3) * s, rng.range(0.08, 0.3) * s);
        let disc = rng.uniform() < 0.5;
        for i in 0..size {
            for j in 0..size {
                let (py, px) = ((i as f64 - cy) / ry, (j as f64 - cx) / rx);
                let inside = if disc { py * py + px * px <= 1.0 } else { py.abs() <= 1.0 && px.abs() <= 1.0 };
                if inside {
                    for c in 0..3 {
                        img[c * n + i * size + j] = col[c];
                    }
                }
            }
        }
    }
    let amp = rng.range(0.03, 0.12);
    let (fy, fx) = (rng.range(1.0, 6.0), rng.range(1.0, 6.0));
    let phase = rng.range(0.0, core::f64::consts::TAU);
    for i in 0..size {
        for j in 0..size {
            let t = amp * libm::sin(core::f64::consts::TAU * (fy * i as f64 + fx * j as f64) / s + phase);
            for c in 0..3 {
                let v = &mut img[c * n + i * size + j];
                *v = (*v + t).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(&[3, size, size], img).expect("scene shape")
}
