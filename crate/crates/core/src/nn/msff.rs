//! Multi-scale feature-fusion feed-forward.

use alloc::format;

use crate::error::Result;
use crate::nn::config::MsffConfig;
use crate::nn::layers::{Conv, LayerNorm};
use crate::params::{Bound, Init};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct Msff {
    pub norm: LayerNorm,
    pub expand: Conv,
    pub p1: Conv,
    pub s1: Conv,
    pub p2: Conv,
    pub s2: Conv,
    pub fuse: Conv,
    hidden: usize,
}

impl Msff {
    pub fn new(init: &mut Init<'_>, name: &str, c: usize, cfg: MsffConfig) -> Result<Self> {
        let h = cfg.hidden(c)?;
        Ok(Msff {
            norm: LayerNorm::new(init, &format!("{name}.ln"), c)?,
            expand: Conv::pointwise(init, &format!("{name}.expand"), c, h)?,
            p1: Conv::depthwise(init, &format!("{name}.p1"), h, 3)?,
            s1: Conv::depthwise(init, &format!("{name}.s1"), h, 5)?,
            p2: Conv::depthwise(init, &format!("{name}.p2"), h, 3)?,
            s2: Conv::depthwise(init, &format!("{name}.s2"), h, 5)?,
            fuse: Conv::pointwise(init, &format!("{name}.fuse"), 2 * h, c)?,
            hidden: h,
        })
    }

    /// `X + fuse([p2, s2])` where the second stage mixes halves of the first
    /// stage's 3x3 and 5x5 branches crosswise.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let half = self.hidden / 2;
        let h = self.norm.forward(tape, p, x)?;
        let h = self.expand.forward(tape, p, h)?;
        let p1 = self.p1.forward(tape, p, h)?;
        let p1 = tape.relu(p1);
        let s1 = self.s1.forward(tape, p, h)?;
        let s1 = tape.relu(s1);
        let (p1a, p1b) = (tape.narrow(p1, 0, 0, half)?, tape.narrow(p1, 0, half, half)?);
        let (s1a, s1b) = (tape.narrow(s1, 0, 0, half)?, tape.narrow(s1, 0, half, half)?);
        let ps = tape.concat(&[p1a, s1a], 0)?;
        let p2 = self.p2.forward(tape, p, ps)?;
        let p2 = tape.relu(p2);
        let sp = tape.concat(&[s1b, p1b], 0)?;
        let s2 = self.s2.forward(tape, p, sp)?;
        let s2 = tape.relu(s2);
        let cat = tape.concat(&[p2, s2], 0)?;
        let y = self.fuse.forward(tape, p, cat)?;
        tape.add(x, y)
    }
}
