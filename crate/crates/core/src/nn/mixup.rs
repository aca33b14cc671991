//! Learnable gated blend of skip and decoder features.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::params::{Bound, Init};
use crate::tape::{Tape, Var};

/// One gate logit per skip level.
#[derive(Debug, Clone)]
pub struct MixupGate {
    pub thetas: Vec<String>,
}

impl MixupGate {
    pub fn new(init: &mut Init<'_>, name: &str, levels: usize) -> Result<Self> {
        let thetas = (1..=levels)
            .map(|i| init.zeros(&format!("{name}.theta{i}"), &[1]))
            .collect::<Result<_>>()?;
        Ok(MixupGate { thetas })
    }

    /// Mixes at 1-based level `i`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, f_down: Var, f_up: Var, i: usize) -> Result<Var> {
        let name = i
            .checked_sub(1)
            .and_then(|j| self.thetas.get(j))
            .ok_or(Error::Index { op: "adaptive_mixup", index: i, len: self.thetas.len() })?;
        adaptive_mixup(tape, f_down, f_up, p.var(name)?)
    }
}

/// `σ(θ)·f_down + (1 − σ(θ))·f_up`, evaluated as `f_up + σ(θ)·(f_down − f_up)`
/// so equal inputs pass through exactly.
pub fn adaptive_mixup(tape: &mut Tape, f_down: Var, f_up: Var, theta: Var) -> Result<Var> {
    if tape.shape(f_down) != tape.shape(f_up) {
        return shape_err("adaptive_mixup", tape.shape(f_down), tape.shape(f_up));
    }
    let g = tape.sigmoid(theta);
    let d = tape.sub(f_down, f_up)?;
    let d = tape.mul_scalar(d, g)?;
    tape.add(f_up, d)
}
