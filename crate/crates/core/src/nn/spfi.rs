//! Cross-self-attention fusion of task features into the backbone.

use alloc::format;

use crate::error::{Error, Result};
use crate::nn::layers::{multi_head, resample_pow2, tokens, Conv, LayerNorm};
use crate::params::{Bound, Init};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
struct AttnLayer {
    q: Conv,
    k: Conv,
    v: Conv,
    out: Conv,
}

impl AttnLayer {
    fn new(init: &mut Init<'_>, name: &str, c: usize) -> Result<Self> {
        Ok(AttnLayer {
            q: Conv::pointwise(init, &format!("{name}.q"), c, c)?,
            k: Conv::pointwise(init, &format!("{name}.k"), c, c)?,
            v: Conv::pointwise(init, &format!("{name}.v"), c, c)?,
            out: Conv::pointwise(init, &format!("{name}.out"), c, c)?,
        })
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, qsrc: Var, kvsrc: Var) -> Result<Var> {
        let s = tape.shape(kvsrc).to_vec();
        let q = self.q.forward(tape, p, qsrc)?;
        let k = self.k.forward(tape, p, kvsrc)?;
        let v = self.v.forward(tape, p, kvsrc)?;
        let (q, k, v) = (tokens(tape, q)?, tokens(tape, k)?, tokens(tape, v)?);
        let o = multi_head(tape, q, k, v, 1, 1.0 / libm::sqrt(s[0] as f64))?;
        let o = tape.reshape(o, &s)?;
        self.out.forward(tape, p, o)
    }
}

/// Task-to-backbone cross-attention followed by self-attention, both
/// pre-norm residual with a single head.
#[derive(Debug, Clone)]
pub struct Spfi {
    /// Maps the previous stage's task feature to this stage's width.
    pub task_proj: Conv,
    pub norm_task: LayerNorm,
    pub norm_cross: LayerNorm,
    pub norm_self: LayerNorm,
    cross: AttnLayer,
    selfattn: AttnLayer,
}

impl Spfi {
    pub fn new(init: &mut Init<'_>, name: &str, task_width: usize, c: usize) -> Result<Self> {
        Ok(Spfi {
            task_proj: Conv::pointwise(init, &format!("{name}.task_proj"), task_width, c)?,
            norm_task: LayerNorm::new(init, &format!("{name}.ln_task"), c)?,
            norm_cross: LayerNorm::new(init, &format!("{name}.ln_cross"), c)?,
            norm_self: LayerNorm::new(init, &format!("{name}.ln_self"), c)?,
            cross: AttnLayer::new(init, &format!("{name}.cross"), c)?,
            selfattn: AttnLayer::new(init, &format!("{name}.self"), c)?,
        })
    }

    /// Resamples and projects a task feature onto `backbone`'s grid and width.
    pub fn prepare_task(&self, tape: &mut Tape, p: &Bound, backbone: Var, task: Var) -> Result<Var> {
        let s = tape.shape(backbone).to_vec();
        let t = resample_pow2(tape, task, s[1], s[2])?;
        self.task_proj.forward(tape, p, t)
    }

    /// Fuses a task feature already shaped like `backbone`.
    pub fn fuse(&self, tape: &mut Tape, p: &Bound, backbone: Var, task: Var) -> Result<Var> {
        if tape.shape(backbone) != tape.shape(task) {
            return Err(Error::Shape {
                op: "spfi",
                lhs: tape.shape(backbone).to_vec(),
                rhs: tape.shape(task).to_vec(),
            });
        }
        let t = self.norm_task.forward(tape, p, task)?;
        let b = self.norm_cross.forward(tape, p, backbone)?;
        let x = self.cross.forward(tape, p, t, b)?;
        let x = tape.add(backbone, x)?;
        let h = self.norm_self.forward(tape, p, x)?;
        let y = self.selfattn.forward(tape, p, h, h)?;
        tape.add(x, y)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, backbone: Var, task: Var) -> Result<Var> {
        let t = self.prepare_task(tape, p, backbone, task)?;
        self.fuse(tape, p, backbone, t)
    }
}
