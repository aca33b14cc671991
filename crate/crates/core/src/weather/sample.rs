//! Seeded parameter sampling and dataset assembly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{scene, smooth_noise, synthesize, HazeParams, ImagePair, Kind, Params, RainLayer, RainParams, SnowParams};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Relative sampling weights of degradation kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub weights: Vec<(Kind, f64)>,
}

impl Mix {
    /// Parses `kind=weight` pairs separated by commas, e.g. `haze=1,snow=2`.
    pub fn parse(spec: &str) -> Result<Mix> {
        let mut weights = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, w) = part
                .split_once('=')
                .ok_or_else(|| Error::Param(format!("mix entry {part:?} is not kind=weight")))?;
            let kind = Kind::parse(k.trim())?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::Param(format!("mix weight {w:?} is not a number")))?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Param(format!("mix weight for {kind} must be nonnegative")));
            }
            if weights.iter().any(|(k, _)| *k == kind) {
                return Err(Error::Param(format!("mix lists {kind} twice")));
            }
            weights.push((kind, w));
        }
        let mix = Mix { weights };
        mix.total()?;
        Ok(mix)
    }

    fn total(&self) -> Result<f64> {
        let total: f64 = self.weights.iter().map(|(_, w)| w).sum();
        if self.weights.is_empty() || !(total > 0.0) {
            return Err(Error::Param("degradation mix is empty".into()));
        }
        Ok(total)
    }

    fn pick(&self, rng: &mut SeededRng) -> Result<Kind> {
        let mut u = rng.uniform() * self.total()?;
        for &(k, w) in &self.weights {
            if u < w {
                return Ok(k);
            }
            u -= w;
        }
        let last = self.weights.iter().rev().find(|(_, w)| *w > 0.0);
        Ok(last.map(|(k, _)| *k).unwrap_or(Kind::Haze))
    }
}

fn haze_params(size: usize, rng: &mut SeededRng) -> HazeParams {
    let a = rng.range(0.7, 1.0);
    let beta = rng.range(0.8, 1.6);
    let dmax = rng.range(0.6, 1.4);
    let depth = smooth_noise(size, size, 3, rng).into_iter().map(|d| 0.1 + dmax * d).collect();
    HazeParams { a, beta, depth: Tensor::new(&[size, size], depth).expect("depth shape") }
}

fn rain_params(rng: &mut SeededRng) -> RainParams {
    let angle = rng.range(-20.0, 20.0);
    let layers = (0..1 + rng.below(3))
        .map(|_| RainLayer {
            angle: angle + rng.range(-5.0, 5.0),
            length: rng.range(6.0, 16.0),
            density: rng.range(0.03, 0.08),
            intensity: rng.range(0.3, 0.7),
        })
        .collect();
    RainParams { layers, seed: rng.next_u64() }
}

fn snow_params(size: usize, rng: &mut SeededRng) -> SnowParams {
    let n = size * size;
    let seed = rng.next_u64();
    let mut flakes = SeededRng::new(seed);
    let (mut r, mut z) = (vec![0.0; n], vec![0.0; n]);
    let coverage = flakes.range(0.08, 0.2);
    let count = (coverage * n as f64 / 4.0) as usize;
    for _ in 0..count {
        let rad = flakes.range(0.6, 2.2);
        let opacity = flakes.range(0.7, 1.0);
        let (cy, cx) = (flakes.range(0.0, size as f64), flakes.range(0.0, size as f64));
        let reach = libm::ceil(rad) as isize;
        for di in -reach..=reach {
            for dj in -reach..=reach {
                let (y, x) = (libm::floor(cy) as isize + di, libm::floor(cx) as isize + dj);
                if y < 0 || x < 0 || y >= size as isize || x >= size as isize {
                    continue;
                }
                let (py, px) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                let d2 = (py * py + px * px) / (rad * rad);
                if d2 <= 1.0 {
                    let p = y as usize * size + x as usize;
                    r[p] = 1.0;
                    z[p] = f64::max(z[p], opacity * (1.0 - 0.5 * d2));
                }
            }
        }
    }
    let c = (0..3 * n).map(|_| flakes.range(0.85, 1.0)).collect();
    let t = smooth_noise(size, size, 3, rng).into_iter().map(|v| 0.7 + 0.3 * v).collect();
    SnowParams {
        t: Tensor::new(&[size, size], t).expect("shape"),
        a: rng.range(0.75, 1.0),
        r: Tensor::new(&[size, size], r).expect("shape"),
        z: Tensor::new(&[size, size], z).expect("shape"),
        c: Tensor::new(&[3, size, size], c).expect("shape"),
        seed,
    }
}

/// Draws degradation parameters of `kind` for a `size` x `size` image.
pub fn random_params(kind: Kind, size: usize, rng: &mut SeededRng) -> Params {
    match kind {
        Kind::Haze => Params::Haze(haze_params(size, rng)),
        Kind::Rain => Params::Rain(rain_params(rng)),
        Kind::Snow => Params::Snow(snow_params(size, rng)),
        Kind::RainHaze => {
            let r = rain_params(rng);
            Params::RainHaze(r, haze_params(size, rng))
        }
    }
}

/// `count` seeded pairs of procedural scenes; sample `i` depends only on
/// `(seed, i)` and the mix.
pub fn make_dataset(count: usize, size: usize, mix: &Mix, seed: u64) -> Result<Vec<(u64, ImagePair)>> {
    if size < 8 || !size.is_power_of_two() {
        return Err(Error::Config(format!(
            "image size {size} must be a power of two (>= 8) for the radix-2 FFT"
        )));
    }
    mix.total()?;
    let mut picker = SeededRng::derive(seed, u64::MAX);
    (0..count as u64)
        .map(|i| {
            let kind = mix.pick(&mut picker)?;
            let sample_seed = SeededRng::derive(seed, i).next_u64();
            let clean = scene(size, &mut SeededRng::derive(sample_seed, 0));
            let params = random_params(kind, size, &mut SeededRng::derive(sample_seed, 1));
            Ok((sample_seed, synthesize(&clean, &params)?))
        })
        .collect()
}
