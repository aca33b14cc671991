//! Task intra-patch block: attention with a learned query inside each
//! half-size patch.

use alloc::format;
use alloc::string::String;

use crate::error::{shape_err, Result};
use crate::nn::config::AttentionConfig;
use crate::nn::layers::{attention, patchify, unpatchify, Conv, Ffn, LayerNorm};
use crate::params::{Bound, Init, INIT_STD};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct Tipb {
    pub norm: LayerNorm,
    pub key: Conv,
    pub value: Conv,
    /// Learnable query sequence, `[L, C]` with one row per patch position.
    pub query: String,
    pub out: Conv,
    pub ffn: Ffn,
    pub attn: AttentionConfig,
    /// Patch size `(h, w)`.
    pub patch: (usize, usize),
}

impl Tipb {
    /// Block for `[C, H, W]` inputs; `H` and `W` must be even.
    pub fn new(init: &mut Init<'_>, name: &str, attn: AttentionConfig, h: usize, w: usize) -> Result<Self> {
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err("tipb", &[attn.width, h, w], &[2, 2]);
        }
        let c = attn.width;
        let patch = (h / 2, w / 2);
        Ok(Tipb {
            norm: LayerNorm::new(init, &format!("{name}.ln"), c)?,
            key: Conv::pointwise(init, &format!("{name}.k"), c, c)?,
            value: Conv::pointwise(init, &format!("{name}.v"), c, c)?,
            query: init.normal(&format!("{name}.query"), &[patch.0 * patch.1, c], INIT_STD)?,
            out: Conv::pointwise(init, &format!("{name}.out"), c, c)?,
            ffn: Ffn::new(init, &format!("{name}.ffn"), c, 2)?,
            attn,
            patch,
        })
    }

    /// Attention output plus the input residual, before the FFN.
    pub fn attend(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let (ph, pw) = self.patch;
        if s != [self.attn.width, 2 * ph, 2 * pw] {
            return shape_err("tipb", &s, &[self.attn.width, 2 * ph, 2 * pw]);
        }
        let (heads, d, l) = (self.attn.heads, self.attn.key_dim, ph * pw);
        let h = self.norm.forward(tape, p, x)?;
        let heads_of = |t: &mut Tape, conv: &Conv| -> Result<Var> {
            let y = conv.forward(t, p, h)?;
            let y = patchify(t, y)?;
            t.reshape(y, &[4, heads, d, l])
        };
        let k = heads_of(tape, &self.key)?;
        let v = heads_of(tape, &self.value)?;
        let q = tape.transpose(p.var(&self.query)?)?;
        let q = tape.reshape(q, &[1, heads, d, l])?;
        let q = tape.concat(&[q; 4], 0)?;
        let o = attention(tape, q, k, v, 1.0 / libm::sqrt(d as f64))?;
        let o = tape.reshape(o, &[4, self.attn.width, ph, pw])?;
        let o = unpatchify(tape, o)?;
        let o = self.out.forward(tape, p, o)?;
        tape.add(x, o)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = self.attend(tape, p, x)?;
        self.ffn.forward(tape, p, y)
    }
}
