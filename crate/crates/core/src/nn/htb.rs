//! Histogram transformer block.

use alloc::format;

use crate::error::Result;
use crate::nn::config::{AttentionConfig, HistConfig, MsffConfig};
use crate::nn::histogram::Dhsa;
use crate::nn::layers::LayerNorm;
use crate::nn::msff::Msff;
use crate::params::{Bound, Init};
use crate::tape::{Tape, Var};

/// `F + DHSA(LN(F))` followed by the MSFF residual. Without the attention
/// path the block reduces to the MSFF residual alone.
#[derive(Debug, Clone)]
pub struct Htb {
    pub attention: Option<(LayerNorm, Dhsa)>,
    pub msff: Msff,
}

impl Htb {
    pub fn new(
        init: &mut Init<'_>,
        name: &str,
        hist: HistConfig,
        attn: AttentionConfig,
        msff: MsffConfig,
        use_histogram: bool,
    ) -> Result<Self> {
        let attention = if use_histogram {
            Some((
                LayerNorm::new(init, &format!("{name}.ln1"), attn.width)?,
                Dhsa::new(init, &format!("{name}.dhsa"), hist, attn)?,
            ))
        } else {
            None
        };
        Ok(Htb {
            attention,
            msff: Msff::new(init, &format!("{name}.msff"), attn.width, msff)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, f: Var) -> Result<Var> {
        let mut f = f;
        if let Some((norm, dhsa)) = &self.attention {
            let h = norm.forward(tape, p, f)?;
            let h = dhsa.forward(tape, p, h)?;
            f = tape.add(f, h)?;
        }
        self.msff.forward(tape, p, f)
    }
}
