//! Task sequence generator: fuses the task pyramid into a query map and
//! injects it into decoder features by cross-attention.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::config::AttentionConfig;
use crate::nn::layers::{multi_head, resample_pow2, tokens, Conv, Ffn, LayerNorm};
use crate::ops::conv::ConvSpec;
use crate::params::{Bound, Init};
use crate::tape::{Tape, Var};

/// Per-stage task features `T_1..T_3`, finest first.
#[derive(Debug, Clone, Default)]
pub struct TaskFeaturePyramid {
    pub stages: Vec<Var>,
}

impl TaskFeaturePyramid {
    pub fn push(&mut self, t: Var) {
        self.stages.push(t);
    }
}

/// Builds `Q_Task = Conv3(Conv7(T1) + Conv5(T2) + Conv3(T3))` at the
/// resolution and width of `T3`.
#[derive(Debug, Clone)]
pub struct TaskQueryBuilder {
    pub proj1: Conv,
    pub proj2: Conv,
    pub k7: Conv,
    pub k5: Conv,
    pub k3: Conv,
    pub merge: Conv,
}

impl TaskQueryBuilder {
    /// `widths` are the channel counts of `T1..T3`.
    pub fn new(init: &mut Init<'_>, name: &str, widths: [usize; 3]) -> Result<Self> {
        let c = widths[2];
        Ok(TaskQueryBuilder {
            proj1: Conv::pointwise(init, &format!("{name}.proj1"), widths[0], c)?,
            proj2: Conv::pointwise(init, &format!("{name}.proj2"), widths[1], c)?,
            k7: Conv::depthwise(init, &format!("{name}.k7"), c, 7)?,
            k5: Conv::depthwise(init, &format!("{name}.k5"), c, 5)?,
            k3: Conv::depthwise(init, &format!("{name}.k3"), c, 3)?,
            merge: Conv::new(init, &format!("{name}.merge"), c, c, ConvSpec::dense(3)?, true)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, pyr: &TaskFeaturePyramid) -> Result<Var> {
        let [t1, t2, t3] = pyr.stages[..] else {
            return Err(Error::Contract(format!(
                "task pyramid needs 3 stages, got {}",
                pyr.stages.len()
            )));
        };
        let (h, w) = (tape.shape(t3)[1], tape.shape(t3)[2]);
        let t1 = resample_pow2(tape, t1, h, w)?;
        let t1 = self.proj1.forward(tape, p, t1)?;
        let t2 = resample_pow2(tape, t2, h, w)?;
        let t2 = self.proj2.forward(tape, p, t2)?;
        let a = self.k7.forward(tape, p, t1)?;
        let b = self.k5.forward(tape, p, t2)?;
        let c = self.k3.forward(tape, p, t3)?;
        let s = tape.add(a, b)?;
        let s = tape.add(s, c)?;
        self.merge.forward(tape, p, s)
    }
}

/// Cross-attention with queries from `Q_Task` and keys, values from the
/// decoder feature.
#[derive(Debug, Clone)]
pub struct Tsg {
    pub q_proj: Conv,
    pub norm: LayerNorm,
    pub key: Conv,
    pub value: Conv,
    pub out: Conv,
    pub ffn: Ffn,
    pub attn: AttentionConfig,
}

impl Tsg {
    pub fn new(init: &mut Init<'_>, name: &str, task_width: usize, attn: AttentionConfig) -> Result<Self> {
        let c = attn.width;
        Ok(Tsg {
            q_proj: Conv::pointwise(init, &format!("{name}.q"), task_width, c)?,
            norm: LayerNorm::new(init, &format!("{name}.ln"), c)?,
            key: Conv::pointwise(init, &format!("{name}.k"), c, c)?,
            value: Conv::pointwise(init, &format!("{name}.v"), c, c)?,
            out: Conv::pointwise(init, &format!("{name}.out"), c, c)?,
            ffn: Ffn::new(init, &format!("{name}.ffn"), c, 2)?,
            attn,
        })
    }

    /// `MSA(I, Q_Task) + I`, before the FFN.
    pub fn attend(&self, tape: &mut Tape, p: &Bound, x: Var, qtask: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let q = resample_pow2(tape, qtask, s[1], s[2])?;
        let q = self.q_proj.forward(tape, p, q)?;
        if tape.shape(q) != s.as_slice() {
            return Err(Error::Shape { op: "tsg", lhs: tape.shape(q).to_vec(), rhs: s });
        }
        let h = self.norm.forward(tape, p, x)?;
        let k = self.key.forward(tape, p, h)?;
        let v = self.value.forward(tape, p, h)?;
        let (q, k, v) = (tokens(tape, q)?, tokens(tape, k)?, tokens(tape, v)?);
        let scale = 1.0 / libm::sqrt(self.attn.key_dim as f64);
        let o = multi_head(tape, q, k, v, self.attn.heads, scale)?;
        let o = tape.reshape(o, &s)?;
        let o = self.out.forward(tape, p, o)?;
        tape.add(x, o)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, qtask: Var) -> Result<Var> {
        let y = self.attend(tape, p, x, qtask)?;
        self.ffn.forward(tape, p, y)
    }
}
