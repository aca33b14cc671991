//! Composite restoration objective.

use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::ops::conv::ConvSpec;
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Weights of the perceptual and frequency terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 0.04, beta: 0.004 }
    }
}

fn diff(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return shape_err("loss", tape.shape(pred), tape.shape(target));
    }
    tape.sub(pred, target)
}

/// Mean elementwise Huber loss with threshold 1.
pub fn smooth_l1(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let e = diff(tape, pred, target)?;
    let h = tape.huber(e);
    Ok(tape.mean(h))
}

pub fn mse(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let e = diff(tape, pred, target)?;
    let s = tape.square(e);
    Ok(tape.mean(s))
}

/// MSE between the real/imaginary planes of the per-channel 2-D DFTs.
pub fn frequency_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let fp = tape.fft2(pred)?;
    let ft = tape.fft2(target)?;
    mse(tape, fp, ft)
}

/// Source of feature maps for the perceptual term.
pub trait FeatureExtractor {
    fn features(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>>;
}

/// Frozen convolutional feature pyramid standing in for pretrained VGG
/// features: `3 -> 8 -> 8 | down | 8 -> 16 -> 16 | down | 16 -> 32 -> 32`,
/// tapped after each pair of 3x3 conv + ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualExtractor {
    /// `(weight, bias)` per layer.
    layers: Vec<(Tensor, Tensor)>,
}

const PYRAMID: [(usize, usize); 6] = [(3, 8), (8, 8), (8, 16), (16, 16), (16, 32), (32, 32)];

impl PerceptualExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = SeededRng::derive(seed, 0x7e7c);
        let spec = ConvSpec::dense(3).expect("3x3");
        let layers = PYRAMID
            .iter()
            .map(|&(ci, co)| {
                let shape = spec.weight_shape(ci, co);
                let std = libm::sqrt(2.0 / (9 * ci) as f64);
                let n = shape.iter().product();
                let w = Tensor::new(&shape, (0..n).map(|_| std * rng.normal()).collect()).expect("shape");
                (w, Tensor::zeros(&[co]))
            })
            .collect();
        PerceptualExtractor { layers }
    }
}

impl FeatureExtractor for PerceptualExtractor {
    /// Feature maps at the three taps.
    fn features(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>> {
        let spec = ConvSpec::dense(3)?;
        let mut taps = Vec::with_capacity(3);
        let mut h = x;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            if i == 2 || i == 4 {
                h = tape.downsample2(h)?;
            }
            let w = tape.constant(w.clone());
            let b = tape.constant(b.clone());
            h = tape.conv2d(h, w, Some(b), spec)?;
            h = tape.relu(h);
            if i % 2 == 1 {
                taps.push(h);
            }
        }
        Ok(taps)
    }
}

/// Sum over taps of the feature-map MSE.
pub fn perceptual_loss<E: FeatureExtractor + ?Sized>(
    tape: &mut Tape,
    pred: Var,
    target: Var,
    ex: &E,
) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return shape_err("perceptual_loss", tape.shape(pred), tape.shape(target));
    }
    let fp = ex.features(tape, pred)?;
    let ft = ex.features(tape, target)?;
    if fp.is_empty() || fp.len() != ft.len() {
        return Err(Error::Contract("feature extractor returned no or uneven taps".into()));
    }
    let mut total: Option<Var> = None;
    for (a, b) in fp.into_iter().zip(ft) {
        let m = mse(tape, a, b)?;
        total = Some(match total {
            None => m,
            Some(t) => tape.add(t, m)?,
        });
    }
    Ok(total.expect("nonempty taps"))
}

/// Scalar handles of the three terms and their weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub l1: Var,
    pub perceptual: Var,
    pub frequency: Var,
}

/// `smooth_l1 + lambda * perceptual + beta * frequency`.
pub fn total_loss<E: FeatureExtractor + ?Sized>(
    tape: &mut Tape,
    pred: Var,
    target: Var,
    w: &LossWeights,
    ex: &E,
) -> Result<LossTerms> {
    let l1 = smooth_l1(tape, pred, target)?;
    let perceptual = perceptual_loss(tape, pred, target, ex)?;
    let frequency = frequency_loss(tape, pred, target)?;
    let p = tape.scale(perceptual, w.lambda);
    let f = tape.scale(frequency, w.beta);
    let t = tape.add(l1, p)?;
    let total = tape.add(t, f)?;
    Ok(LossTerms { total, l1, perceptual, frequency })
}
