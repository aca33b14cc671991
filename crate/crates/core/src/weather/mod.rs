//! Synthetic adverse-weather degradation of clean images.
//!
//! Haze follows `I = J t + A (1 - t)` with `t = exp(-beta * depth)`, rain adds
//! streak layers `I = J + sum S_i`, and snow composites
//! `K = J (1 - Z R) + C Z R` before the haze-like transmission
//! `I = K T + A (1 - T)`. All outputs are clamped to `[0, 1]`.

mod sample;
mod scene;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub use sample::{make_dataset, random_params, Mix};
pub use scene::{scene, smooth_noise};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Haze,
    Rain,
    Snow,
    RainHaze,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::Haze, Kind::Rain, Kind::Snow, Kind::RainHaze];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Haze => "haze",
            Kind::Rain => "rain",
            Kind::Snow => "snow",
            Kind::RainHaze => "rain+haze",
        }
    }

    pub fn parse(s: &str) -> Result<Kind> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown degradation kind {s:?}")))
    }
}

impl core::fmt::Display for Kind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazeParams {
    /// Global atmospheric light.
    pub a: f64,
    /// Scattering coefficient.
    pub beta: f64,
    /// Nonnegative pseudo-depth, `[H, W]`.
    pub depth: Tensor,
}

impl HazeParams {
    /// `t = exp(-beta * depth)`.
    pub fn transmission(&self) -> Result<Vec<f64>> {
        if !(self.beta > 0.0) {
            return Err(Error::Param(format!("haze beta must be positive, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::Param(format!("atmospheric light {} outside [0, 1]", self.a)));
        }
        if self.depth.data().iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Param("haze depth must be nonnegative".into()));
        }
        Ok(self.depth.data().iter().map(|d| libm::exp(-self.beta * d)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RainLayer {
    /// Streak direction in degrees from vertical.
    pub angle: f64,
    /// Streak length in pixels.
    pub length: f64,
    /// Streak coverage in `[0, 1]`.
    pub density: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RainParams {
    pub layers: Vec<RainLayer>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnowParams {
    /// Transmission, `[H, W]` in `(0, 1]`.
    pub t: Tensor,
    pub a: f64,
    /// Binary snow location mask, `[H, W]`.
    pub r: Tensor,
    /// Snow opacity in `[0, 1]`, `[H, W]`.
    pub z: Tensor,
    /// Snow colour (chromatic aberration), `[3, H, W]`.
    pub c: Tensor,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Haze(HazeParams),
    Rain(RainParams),
    Snow(SnowParams),
    RainHaze(RainParams, HazeParams),
}

impl Params {
    pub fn kind(&self) -> Kind {
        match self {
            Params::Haze(_) => Kind::Haze,
            Params::Rain(_) => Kind::Rain,
            Params::Snow(_) => Kind::Snow,
            Params::RainHaze(..) => Kind::RainHaze,
        }
    }

    /// One-line `key=value` description for dataset manifests.
    pub fn summary(&self) -> String {
        let haze = |h: &HazeParams| {
            let d = h.depth.data();
            let dmax = d.iter().copied().fold(0.0, f64::max);
            format!("A={:.4},beta={:.4},depth_max={:.4}", h.a, h.beta, dmax)
        };
        let rain = |r: &RainParams| {
            let mut s = format!("layers={},rain_seed={}", r.layers.len(), r.seed);
            for (i, l) in r.layers.iter().enumerate() {
                s += &format!(
                    ",l{i}=angle:{:.2}/len:{:.2}/density:{:.4}/intensity:{:.4}",
                    l.angle, l.length, l.density, l.intensity
                );
            }
            s
        };
        match self {
            Params::Haze(h) => haze(h),
            Params::Rain(r) => rain(r),
            Params::Snow(s) => {
                let cover = s.r.mean();
                format!("A={:.4},T_min={:.4},coverage={:.4},snow_seed={}", s.a, min(&s.t), cover, s.seed)
            }
            Params::RainHaze(r, h) => format!("{},{}", rain(r), haze(h)),
        }
    }
}

fn min(t: &Tensor) -> f64 {
    t.data().iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub clean: Tensor,
    pub degraded: Tensor,
    pub params: Params,
}

impl ImagePair {
    pub fn kind(&self) -> Kind {
        self.params.kind()
    }
}

fn check_image(j: &Tensor) -> Result<(usize, usize)> {
    let s = j.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Shape { op: "weather", lhs: s.to_vec(), rhs: vec![3] });
    }
    Ok((s[1], s[2]))
}

fn check_map(op: &'static str, m: &Tensor, h: usize, w: usize) -> Result<()> {
    if m.shape() != [h, w] {
        return Err(Error::Shape { op, lhs: m.shape().to_vec(), rhs: vec![h, w] });
    }
    Ok(())
}

/// `I = J t + A (1 - t)` per pixel, without clamping.
pub fn apply_haze(j: &Tensor, p: &HazeParams) -> Result<Tensor> {
    let (h, w) = check_image(j)?;
    check_map("haze", &p.depth, h, w)?;
    let t = p.transmission()?;
    let mut out = j.clone();
    for c in 0..3 {
        for (v, t) in out.data_mut()[c * h * w..(c + 1) * h * w].iter_mut().zip(&t) {
            *v = *v * t + p.a * (1.0 - t);
        }
    }
    Ok(out)
}

pub fn synth_haze(j: &Tensor, p: &HazeParams) -> Result<ImagePair> {
    let degraded = apply_haze(j, p)?.clamp(0.0, 1.0);
    Ok(ImagePair { clean: j.clone(), degraded, params: Params::Haze(p.clone()) })
}

/// Weight of a streak sample at normalized position `u` in `[-1, 1]` along
/// its axis: 1 on the central half, Gaussian falloff towards the ends.
fn streak_profile(u: f64) -> f64 {
    let e = u.abs() - 0.5;
    if e <= 0.0 {
        1.0
    } else {
        libm::exp(-0.5 * (e / 0.2) * (e / 0.2))
    }
}

/// Streak mask `[H, W]` in `[0, 1]` of one rain layer; overlapping streaks
/// combine by maximum. Draws from `rng`.
pub fn rain_layer_mask(h: usize, w: usize, layer: &RainLayer, rng: &mut SeededRng) -> Vec<f64> {
    let mut mask = vec![0.0; h * w];
    if layer.length <= 0.0 || layer.density <= 0.0 {
        return mask;
    }
    let count = libm::round(layer.density * (h * w) as f64 / layer.length) as usize;
    let base = layer.angle.to_radians();
    for _ in 0..count {
        let theta = base + rng.range(-0.05, 0.05);
        let (dy, dx) = (libm::cos(theta), libm::sin(theta));
        let len = layer.length * rng.range(0.8, 1.2);
        let (cy, cx) = (rng.range(0.0, h as f64), rng.range(0.0, w as f64));
        let steps = libm::ceil(2.0 * len) as usize + 1;
        for s in 0..steps {
            let u = -1.0 + 2.0 * s as f64 / (steps - 1) as f64;
            let (y, x) = (cy + 0.5 * u * len * dy, cx + 0.5 * u * len * dx);
            if y < 0.0 || x < 0.0 || y >= h as f64 || x >= w as f64 {
                continue;
            }
            let p = (y as usize) * w + x as usize;
            mask[p] = f64::max(mask[p], streak_profile(u));
        }
    }
    mask
}

/// Achromatic rain layer sum `sum_i intensity_i * mask_i`, `[H, W]`.
pub fn rain_streaks(h: usize, w: usize, p: &RainParams) -> Result<Vec<f64>> {
    if p.layers.is_empty() {
        return Err(Error::Param("rain needs at least one streak layer".into()));
    }
    let mut rng = SeededRng::new(p.seed);
    let mut total = vec![0.0; h * w];
    for l in &p.layers {
        if !(0.0..=1.0).contains(&l.density) || !(0.0..=1.0).contains(&l.intensity) {
            return Err(Error::Param(format!("rain layer density/intensity outside [0, 1]: {l:?}")));
        }
        let m = rain_layer_mask(h, w, l, &mut rng);
        total.iter_mut().zip(&m).for_each(|(t, m)| *t += l.intensity * m);
    }
    Ok(total)
}

fn add_rain(j: &Tensor, p: &RainParams) -> Result<Tensor> {
    let (h, w) = check_image(j)?;
    let s = rain_streaks(h, w, p)?;
    let mut out = j.clone();
    for c in 0..3 {
        for (v, s) in out.data_mut()[c * h * w..(c + 1) * h * w].iter_mut().zip(&s) {
            *v = (*v + s).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

pub fn synth_rain(j: &Tensor, p: &RainParams) -> Result<ImagePair> {
    let degraded = add_rain(j, p)?;
    Ok(ImagePair { clean: j.clone(), degraded, params: Params::Rain(p.clone()) })
}

/// Snow-occluded scene `K = J (1 - Z R) + C Z R`.
pub fn snow_scene(j: &Tensor, p: &SnowParams) -> Result<Tensor> {
    let (h, w) = check_image(j)?;
    for m in [&p.t, &p.r, &p.z] {
        check_map("snow", m, h, w)?;
    }
    if p.c.shape() != [3, h, w] {
        return Err(Error::Shape { op: "snow", lhs: p.c.shape().to_vec(), rhs: vec![3, h, w] });
    }
    if p.r.data().iter().any(|&r| r != 0.0 && r != 1.0) {
        return Err(Error::Param("snow location mask R must be binary".into()));
    }
    if p.z.data().iter().any(|z| !(0.0..=1.0).contains(z)) {
        return Err(Error::Param("snow mask Z outside [0, 1]".into()));
    }
    let n = h * w;
    let mut k = j.clone();
    for c in 0..3 {
        for i in 0..n {
            let zr = p.z.data()[i] * p.r.data()[i];
            let v = &mut k.data_mut()[c * n + i];
            *v = *v * (1.0 - zr) + p.c.data()[c * n + i] * zr;
        }
    }
    Ok(k)
}

pub fn synth_snow(j: &Tensor, p: &SnowParams) -> Result<ImagePair> {
    let (h, w) = check_image(j)?;
    if p.t.data().iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::Param("snow transmission T outside (0, 1]".into()));
    }
    let mut out = snow_scene(j, p)?;
    let n = h * w;
    for c in 0..3 {
        for i in 0..n {
            let t = p.t.data()[i];
            let v = &mut out.data_mut()[c * n + i];
            *v = (*v * t + p.a * (1.0 - t)).clamp(0.0, 1.0);
        }
    }
    Ok(ImagePair { clean: j.clone(), degraded: out, params: Params::Snow(p.clone()) })
}

/// Haze first, then rain streaks on top.
pub fn synth_rain_haze(j: &Tensor, rain: &RainParams, haze: &HazeParams) -> Result<ImagePair> {
    let hazy = apply_haze(j, haze)?.clamp(0.0, 1.0);
    let degraded = add_rain(&hazy, rain)?;
    Ok(ImagePair {
        clean: j.clone(),
        degraded,
        params: Params::RainHaze(rain.clone(), haze.clone()),
    })
}

/// Applies `params` to `j`.
pub fn synthesize(j: &Tensor, params: &Params) -> Result<ImagePair> {
    match params {
        Params::Haze(h) => synth_haze(j, h),
        Params::Rain(r) => synth_rain(j, r),
        Params::Snow(s) => synth_snow(j, s),
        Params::RainHaze(r, h) => synth_rain_haze(j, r, h),
    }
}
