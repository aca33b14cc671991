//! Central finite-difference checks of tape gradients.

use alloc::vec::Vec;

use crate::error::Result;
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of one probe.
#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Denominator floor for relative errors: gradients below this magnitude are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-5;

/// Runs `f` on leaves built from `inputs`, reduces a non-scalar output with
/// fixed random weights, and compares tape gradients against central
/// differences with `step` at `probes` randomly chosen coordinates.
pub fn check<F>(inputs: &[Tensor], f: F, probes: usize, step: f64, seed: u64) -> Result<Vec<Probe>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut weights: Option<Tensor> = None;
    let mut eval = |xs: &[Tensor], grads: bool| -> Result<(f64, Vec<Option<Tensor>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let loss = if tape.value(out).numel() == 1 {
            out
        } else {
            let w = weights
                .get_or_insert_with(|| {
                    let mut rng = SeededRng::derive(seed, 0xfeed);
                    let shape = tape.shape(out).to_vec();
                    let n = crate::tensor::numel(&shape);
                    Tensor::new(&shape, (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).expect("shape")
                })
                .clone();
            let wv = tape.constant(w);
            let p = tape.mul(out, wv)?;
            tape.sum(p)
        };
        let value = tape.value(loss).item();
        let mut gs = Vec::new();
        if grads {
            tape.backward(loss)?;
            gs = vars.iter().map(|&v| tape.grad(v)).collect();
        }
        Ok((value, gs))
    };
    let (_, analytic) = eval(inputs, true)?;
    let mut rng = SeededRng::derive(seed, 0xd1ff);
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let input = rng.below(inputs.len());
        let element = rng.below(inputs[input].numel());
        let mut xs = inputs.to_vec();
        let orig = xs[input].data()[element];
        xs[input].data_mut()[element] = orig + step;
        let (plus, _) = eval(&xs, false)?;
        xs[input].data_mut()[element] = orig - step;
        let (minus, _) = eval(&xs, false)?;
        let a = analytic[input].as_ref().map_or(0.0, |g| g.data()[element]);
        out.push(Probe {
            input,
            element,
            analytic: a,
            numeric: (plus - minus) / (2.0 * step),
        });
    }
    Ok(out)
}

/// Largest relative error over `probes`.
pub fn max_relative_error(probes: &[Probe]) -> f64 {
    probes
        .iter()
        .map(|p| p.relative_error(REL_FLOOR))
        .fold(0.0, f64::max)
}
