//! Parameterized building blocks shared by the architectural units.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::ops::conv::ConvSpec;
use crate::params::{Bound, Init, INIT_STD};
use crate::tape::{Tape, Var};

/// Convolution with optional bias.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: String,
    pub bias: Option<String>,
    pub spec: ConvSpec,
}

impl Conv {
    pub fn new(init: &mut Init<'_>, name: &str, c_in: usize, c_out: usize, spec: ConvSpec, bias: bool) -> Result<Self> {
        let weight = init.normal(&format!("{name}.w"), &spec.weight_shape(c_in, c_out), INIT_STD)?;
        let bias = if bias {
            Some(init.zeros(&format!("{name}.b"), &[c_out])?)
        } else {
            None
        };
        Ok(Conv { weight, bias, spec })
    }

    pub fn pointwise(init: &mut Init<'_>, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Self::new(init, name, c_in, c_out, ConvSpec::pointwise(), true)
    }

    pub fn depthwise(init: &mut Init<'_>, name: &str, c: usize, ksize: usize) -> Result<Self> {
        Self::new(init, name, c, c, ConvSpec::depthwise(ksize)?, true)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let w = p.var(&self.weight)?;
        let b = self.bias.as_deref().map(|b| p.var(b)).transpose()?;
        tape.conv2d(x, w, b, self.spec)
    }

    pub fn param_names(&self) -> Vec<&str> {
        let mut v = alloc::vec![self.weight.as_str()];
        v.extend(self.bias.as_deref());
        v
    }
}

/// Channel layer normalization with learnable affine terms.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub scale: String,
    pub shift: String,
}

impl LayerNorm {
    pub fn new(init: &mut Init<'_>, name: &str, c: usize) -> Result<Self> {
        Ok(LayerNorm {
            scale: init.ones(&format!("{name}.scale"), &[c])?,
            shift: init.zeros(&format!("{name}.shift"), &[c])?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.layernorm(x, p.var(&self.scale)?, p.var(&self.shift)?)
    }
}

/// Pre-norm residual feed-forward: `x + W2 relu(W1 LN(x))`.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub norm: LayerNorm,
    pub up: Conv,
    pub down: Conv,
}

impl Ffn {
    pub fn new(init: &mut Init<'_>, name: &str, c: usize, expansion: usize) -> Result<Self> {
        Ok(Ffn {
            norm: LayerNorm::new(init, &format!("{name}.ln"), c)?,
            up: Conv::pointwise(init, &format!("{name}.up"), c, c * expansion)?,
            down: Conv::pointwise(init, &format!("{name}.down"), c * expansion, c)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.norm.forward(tape, p, x)?;
        let h = self.up.forward(tape, p, h)?;
        let h = tape.relu(h);
        let h = self.down.forward(tape, p, h)?;
        tape.add(x, h)
    }
}

/// Scaled dot-product attention over token axes.
///
/// `q: [.., heads, d, Nq]`, `k, v: [.., heads, d, Nk]` with equal leading
/// axes. Returns `[.., heads, d, Nq]`.
pub fn attention(tape: &mut Tape, q: Var, k: Var, v: Var, scale: f64) -> Result<Var> {
    tape.attention(q, k, v, scale)
}

/// Multi-head attention between token maps `q: [C, Nq]` and `k, v: [C, Nk]`
/// with `heads` groups of channels; returns `[C, Nq]`.
pub fn multi_head(tape: &mut Tape, q: Var, k: Var, v: Var, heads: usize, scale: f64) -> Result<Var> {
    let (c, nq) = (tape.shape(q)[0], tape.shape(q)[1]);
    let nk = tape.shape(k)[1];
    let d = c / heads;
    let q = tape.reshape(q, &[heads, d, nq])?;
    let k = tape.reshape(k, &[heads, d, nk])?;
    let v = tape.reshape(v, &[heads, d, nk])?;
    let o = attention(tape, q, k, v, scale)?;
    tape.reshape(o, &[c, nq])
}

/// Flattens `[C, H, W]` into `[C, H*W]` tokens.
pub fn tokens(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    tape.reshape(x, &[s[0], s[1] * s[2]])
}

/// Splits `[C, H, W]` into a 2x2 grid of half-size patches `[4, C, H/2, W/2]`
/// in row-major grid order.
pub fn patchify(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 {
        return shape_err("patchify", &s, &[2, 2]);
    }
    let (c, h, w) = (s[0], s[1] / 2, s[2] / 2);
    let g = tape.reshape(x, &[c, 2, h, 2, w])?;
    let g = tape.permute(g, &[1, 3, 0, 2, 4])?;
    tape.reshape(g, &[4, c, h, w])
}

/// Inverse of [`patchify`].
pub fn unpatchify(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    if s.len() != 4 || s[0] != 4 {
        return shape_err("unpatchify", &s, &[4]);
    }
    let (c, h, w) = (s[1], s[2], s[3]);
    let g = tape.reshape(x, &[2, 2, c, h, w])?;
    let g = tape.permute(g, &[2, 0, 3, 1, 4])?;
    tape.reshape(g, &[c, 2 * h, 2 * w])
}

/// Bilinearly rescales `[C, H, W]` by powers of two to `[C, h, w]`.
pub fn resample_pow2(tape: &mut Tape, mut x: Var, h: usize, w: usize) -> Result<Var> {
    loop {
        let s = tape.shape(x).to_vec();
        if s[1] == h && s[2] == w {
            return Ok(x);
        }
        if s[1] < h && s[2] < w && s[1] * 2 <= h && s[2] * 2 <= w {
            x = tape.upsample2(x)?;
        } else if s[1] > h && s[2] > w && s[1] % 2 == 0 && s[2] % 2 == 0 && s[1] / 2 >= h && s[2] / 2 >= w {
            x = tape.downsample2(x)?;
        } else {
            return shape_err("resample", &s, &[s[0], h, w]);
        }
    }
}
