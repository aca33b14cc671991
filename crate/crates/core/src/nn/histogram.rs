//! Dynamic-range convolution and dual-path histogram self-attention.

use alloc::format;

use crate::error::{Error, Result};
use crate::nn::config::{AttentionConfig, HistConfig};
use crate::nn::layers::{attention, Conv};
use crate::ops::sort::SortIndex;
use crate::params::{Bound, Init};
use crate::tape::{Tape, Var};

/// Sort permutations applied to the first channel half by
/// [`dynamic_range_conv`].
#[derive(Debug, Clone)]
pub struct DrcOrder {
    /// Sort along width, applied first.
    pub horizontal: SortIndex,
    /// Sort along height, applied to the width-sorted map.
    pub vertical: SortIndex,
}

/// Sorts the first channel half along width then height and concatenates it
/// with the untouched second half.
pub fn sort_half(tape: &mut Tape, f: Var) -> Result<(Var, DrcOrder)> {
    let s = tape.shape(f).to_vec();
    if s.len() != 3 || s[0] % 2 != 0 {
        return Err(Error::Config(format!(
            "dynamic range convolution needs an even channel count, got {:?}",
            s
        )));
    }
    let half = s[0] / 2;
    let f1 = tape.narrow(f, 0, 0, half)?;
    let f2 = tape.narrow(f, 0, half, half)?;
    let (f1, horizontal) = tape.sort_with_index(f1, 2)?;
    let (f1, vertical) = tape.sort_with_index(f1, 1)?;
    let out = tape.concat(&[f1, f2], 0)?;
    Ok((out, DrcOrder { horizontal, vertical }))
}

/// Returns the first channel half of `x` to its pre-sort positions.
pub fn restore_order(tape: &mut Tape, x: Var, order: &DrcOrder) -> Result<Var> {
    let c = tape.shape(x)[0];
    let half = order.vertical.shape()[0];
    let x1 = tape.narrow(x, 0, 0, half)?;
    let x1 = tape.scatter(x1, &order.vertical)?;
    let x1 = tape.scatter(x1, &order.horizontal)?;
    if c == half {
        return Ok(x1);
    }
    let x2 = tape.narrow(x, 0, half, c - half)?;
    tape.concat(&[x1, x2], 0)
}

#[derive(Debug, Clone)]
pub struct DynamicRangeConv {
    pub pw: Conv,
    pub dw: Conv,
}

impl DynamicRangeConv {
    pub fn new(init: &mut Init<'_>, name: &str, c: usize) -> Result<Self> {
        if c % 2 != 0 {
            return Err(Error::Config(format!(
                "dynamic range convolution needs an even channel count, got {c}"
            )));
        }
        Ok(DynamicRangeConv {
            pw: Conv::pointwise(init, &format!("{name}.pw"), c, c)?,
            dw: Conv::depthwise(init, &format!("{name}.dw"), c, 3)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, f: Var) -> Result<(Var, DrcOrder)> {
        dynamic_range_conv(tape, p, self, f)
    }
}

pub fn dynamic_range_conv(tape: &mut Tape, p: &Bound, m: &DynamicRangeConv, f: Var) -> Result<(Var, DrcOrder)> {
    let (x, order) = sort_half(tape, f)?;
    let x = m.pw.forward(tape, p, x)?;
    let x = m.dw.forward(tape, p, x)?;
    Ok((x, order))
}

/// Splits sorted tokens `[C, N]` into `[heads, bins, C / heads, len]`,
/// padding `N` up to `bins * len` by repeating the last token.
pub fn bin_tokens(tape: &mut Tape, x: Var, heads: usize, bins: usize, len: usize) -> Result<Var> {
    let (c, n) = (tape.shape(x)[0], tape.shape(x)[1]);
    let padded = bins * len;
    if padded < n || c % heads != 0 {
        return Err(Error::Config(format!("cannot split [{c}, {n}] into {heads} heads of {bins} bins of {len}")));
    }
    let x = if padded > n { tape.pad_repeat_last(x, 1, padded - n)? } else { x };
    let x = tape.reshape(x, &[heads, c / heads, bins, len])?;
    tape.permute(x, &[0, 2, 1, 3])
}

/// Per-bin attention over a sorted token sequence.
///
/// `q, k, v: [C, N]` are split into `bins` contiguous bins of `len` tokens
/// (after padding `N` up to `bins * len`); attention runs within each bin and
/// head, using the head's channels as features. Returns `[C, N]`.
fn binned(tape: &mut Tape, q: Var, k: Var, v: Var, bins: usize, len: usize, acfg: &AttentionConfig) -> Result<Var> {
    let (c, n) = (tape.shape(v)[0], tape.shape(v)[1]);
    let padded = bins * len;
    let heads = acfg.heads;
    let q = bin_tokens(tape, q, heads, bins, len)?;
    let k = bin_tokens(tape, k, heads, bins, len)?;
    let v = bin_tokens(tape, v, heads, bins, len)?;
    let scale = 1.0 / libm::sqrt(heads as f64);
    let o = attention(tape, q, k, v, scale)?;
    let o = tape.permute(o, &[0, 2, 1, 3])?;
    let o = tape.reshape(o, &[c, padded])?;
    if padded > n {
        tape.narrow(o, 1, 0, n)
    } else {
        Ok(o)
    }
}

/// Sorted-domain view of the histogram attention inputs.
pub struct SortedInputs {
    pub v: Var,
    pub q1: Var,
    pub k1: Var,
    pub q2: Var,
    pub k2: Var,
    /// Sort order of `V` over the flattened spatial axis, `[C, HW]`.
    pub index: SortIndex,
}

/// Flattens and sorts `V` per channel and gathers both query-key maps by its
/// order.
pub fn sort_inputs(tape: &mut Tape, v: Var, fqk1: Var, fqk2: Var) -> Result<SortedInputs> {
    let s = tape.shape(v).to_vec();
    if s.len() != 3 {
        return Err(Error::Shape { op: "histogram_attention", lhs: s, rhs: alloc::vec![3] });
    }
    let (c, n) = (s[0], s[1] * s[2]);
    for qk in [fqk1, fqk2] {
        let t = tape.shape(qk);
        if t != [2 * c, s[1], s[2]] {
            return Err(Error::Shape { op: "histogram_attention", lhs: t.to_vec(), rhs: s });
        }
    }
    let vf = tape.reshape(v, &[c, n])?;
    let (vs, index) = tape.sort_with_index(vf, 1)?;
    let index2 = index.repeat_outer(2)?;
    let split = |t: &mut Tape, qk: Var| -> Result<(Var, Var)> {
        let qk = t.reshape(qk, &[2 * c, n])?;
        let qk = t.gather(qk, &index2)?;
        Ok((t.narrow(qk, 0, 0, c)?, t.narrow(qk, 0, c, c)?))
    };
    let (q1, k1) = split(tape, fqk1)?;
    let (q2, k2) = split(tape, fqk2)?;
    Ok(SortedInputs { v: vs, q1, k1, q2, k2, index })
}

/// `(bins, len)` of the bin-based and frequency-based reshapes of `n` tokens.
pub fn bin_geometry(n: usize, hcfg: &HistConfig) -> Result<((usize, usize), (usize, usize))> {
    if hcfg.bins > n || hcfg.bin_frequency > n {
        return Err(Error::Config(format!(
            "histogram bins ({}, {}) exceed the {n} spatial positions",
            hcfg.bins, hcfg.bin_frequency
        )));
    }
    let per_bin = n.div_ceil(hcfg.bins);
    let fhr_bins = n.div_ceil(hcfg.bin_frequency);
    Ok(((hcfg.bins, per_bin), (fhr_bins, hcfg.bin_frequency)))
}

/// Bin-based branch `A_B` in the sorted domain, `[C, HW]`.
pub fn histogram_branch(tape: &mut Tape, s: &SortedInputs, hcfg: &HistConfig, acfg: &AttentionConfig) -> Result<Var> {
    let n = tape.shape(s.v)[1];
    let ((bins, len), _) = bin_geometry(n, hcfg)?;
    binned(tape, s.q1, s.k1, s.v, bins, len, acfg)
}

/// `A = A_B ⊙ A_F`, returned in the original spatial order as `[C, H, W]`.
pub fn histogram_attention(
    tape: &mut Tape,
    v: Var,
    fqk1: Var,
    fqk2: Var,
    hcfg: &HistConfig,
    acfg: &AttentionConfig,
) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    if shape[0] != acfg.width {
        return Err(Error::Config(format!(
            "attention width {} does not match {} channels",
            acfg.width, shape[0]
        )));
    }
    let s = sort_inputs(tape, v, fqk1, fqk2)?;
    let n = shape[1] * shape[2];
    let (_, (fbins, flen)) = bin_geometry(n, hcfg)?;
    let a_b = histogram_branch(tape, &s, hcfg, acfg)?;
    let a_f = binned(tape, s.q2, s.k2, s.v, fbins, flen, acfg)?;
    let a = tape.mul(a_b, a_f)?;
    let a = tape.scatter(a, &s.index)?;
    tape.reshape(a, &shape)
}

/// Dynamic-range histogram self-attention.
#[derive(Debug, Clone)]
pub struct Dhsa {
    pub drc: DynamicRangeConv,
    pub qkv: Conv,
    pub out: Conv,
    pub hist: HistConfig,
    pub attn: AttentionConfig,
}

impl Dhsa {
    pub fn new(init: &mut Init<'_>, name: &str, hist: HistConfig, attn: AttentionConfig) -> Result<Self> {
        let c = attn.width;
        Ok(Dhsa {
            drc: DynamicRangeConv::new(init, &format!("{name}.drc"), c)?,
            qkv: Conv::pointwise(init, &format!("{name}.qkv"), c, 5 * c)?,
            out: Conv::pointwise(init, &format!("{name}.out"), c, c)?,
            hist,
            attn,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, f: Var) -> Result<Var> {
        let c = self.attn.width;
        let (x, order) = self.drc.forward(tape, p, f)?;
        let qkv = self.qkv.forward(tape, p, x)?;
        let v = tape.narrow(qkv, 0, 0, c)?;
        let qk1 = tape.narrow(qkv, 0, c, 2 * c)?;
        let qk2 = tape.narrow(qkv, 0, 3 * c, 2 * c)?;
        let a = histogram_attention(tape, v, qk1, qk2, &self.hist, &self.attn)?;
        let a = restore_order(tape, a, &order)?;
        self.out.forward(tape, p, a)
    }
}
