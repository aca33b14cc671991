//! Encoder-decoder restoration network.
//!
//! Four encoder levels of histogram transformer blocks with strided 3x3
//! downsampling. Task intra-patch blocks on levels 0-2 feed both the SPFI
//! fusion of the next level and the task query map. The decoder upsamples
//! bilinearly, blends skips with adaptive mixup, and applies task-sequence
//! guidance on its two coarsest levels. A 3x3 head plus a global residual
//! produces the restored image.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::layers::Conv;
use crate::nn::{AttentionConfig, HistConfig, Htb, MixupGate, MsffConfig, Spfi, TaskFeaturePyramid, TaskQueryBuilder, Tipb, Tsg};
use crate::ops::conv::{ConvMode, ConvSpec};
use crate::params::{Bound, Init, ParameterStore};
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Encoder depth.
pub const LEVELS: usize = 4;
/// Decoder levels (0-based) that receive task-sequence guidance.
pub const TSG_LEVELS: [usize; 2] = [2, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub stage_widths: [usize; LEVELS],
    pub blocks_per_stage: [usize; LEVELS],
    /// Histogram transformer blocks after each decoder merge, finest first.
    pub decoder_blocks: [usize; LEVELS - 1],
    pub heads: usize,
    pub bins: usize,
    pub bin_frequency: usize,
    pub expansion: usize,
    pub image_size: usize,
    pub seed: u64,
    /// TIPB side path, SPFI fusion and TSG guidance.
    pub use_task_path: bool,
    /// Dynamic-range histogram attention inside the transformer blocks.
    pub use_histogram: bool,
    /// Initialize the output head to zero so the untrained model is the
    /// identity.
    pub zero_head: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            stage_widths: [16, 32, 64, 128],
            blocks_per_stage: [1, 1, 2, 2],
            decoder_blocks: [0, 0, 0],
            heads: 2,
            bins: 16,
            bin_frequency: 16,
            expansion: 2,
            image_size: 64,
            seed: 0,
            use_task_path: true,
            use_histogram: true,
            zero_head: true,
        }
    }
}

impl NetConfig {
    /// Checks every structural constraint, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let w = self.stage_widths;
        if w[0] == 0 || w[0] % 2 != 0 {
            return fail(format!("stage width {} must be positive and even", w[0]));
        }
        for l in 1..LEVELS {
            if w[l] != 2 * w[l - 1] {
                return fail(format!("stage widths must double: {:?}", w));
            }
        }
        for &c in &w {
            AttentionConfig::new(c, self.heads)?;
            MsffConfig::new(self.expansion)?.hidden(c)?;
        }
        HistConfig::new(self.bins, self.bin_frequency)?;
        let s = self.image_size;
        if s < 8 || !s.is_power_of_two() {
            return fail(format!("image size {s} must be a power of two divisible by 8"));
        }
        let coarsest = (s >> (LEVELS - 1)) * (s >> (LEVELS - 1));
        if self.bins > coarsest || self.bin_frequency > coarsest {
            return fail(format!(
                "bins {} / bin frequency {} exceed the {coarsest} positions of the coarsest level",
                self.bins, self.bin_frequency
            ));
        }
        if self.blocks_per_stage.iter().any(|&b| b == 0) {
            return fail("every stage needs at least one block".into());
        }
        Ok(())
    }

    pub fn resolution(&self, level: usize) -> usize {
        self.image_size >> level
    }

    fn hist(&self) -> HistConfig {
        HistConfig { bins: self.bins, bin_frequency: self.bin_frequency }
    }

    fn attn(&self, level: usize) -> AttentionConfig {
        AttentionConfig::new(self.stage_widths[level], self.heads).expect("validated")
    }
}

#[derive(Debug, Clone)]
struct EncoderLevel {
    blocks: Vec<Htb>,
    tipb: Option<Tipb>,
    /// Downsampling into this level and the fusion that follows it.
    down: Option<Conv>,
    spfi: Option<Spfi>,
}

#[derive(Debug, Clone)]
struct DecoderLevel {
    up: Conv,
    blocks: Vec<Htb>,
    tsg: Option<Tsg>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: NetConfig,
    pub params: ParameterStore,
    embed: Conv,
    encoder: Vec<EncoderLevel>,
    task_query: Option<TaskQueryBuilder>,
    /// Indexed by 0-based target level.
    decoder: Vec<DecoderLevel>,
    mixup: MixupGate,
    head: Conv,
}

impl Model {
    pub fn build(cfg: &NetConfig) -> Result<Model> {
        cfg.validate()?;
        let mut params = ParameterStore::new();
        let mut rng = SeededRng::new(cfg.seed);
        let init = &mut Init { store: &mut params, rng: &mut rng };
        let w = cfg.stage_widths;
        let dense3 = ConvSpec::dense(3)?;
        let task = cfg.use_task_path;
        let msff = MsffConfig::new(cfg.expansion)?;
        let htb = |init: &mut Init<'_>, name: String, l: usize| {
            Htb::new(init, &name, cfg.hist(), cfg.attn(l), msff, cfg.use_histogram)
        };

        let embed = Conv::new(init, "embed", 3, w[0], dense3, true)?;
        let mut encoder = Vec::with_capacity(LEVELS);
        for l in 0..LEVELS {
            let (down, spfi) = if l == 0 {
                (None, None)
            } else {
                let down = Conv::new(init, &format!("enc{l}.down"), w[l - 1], w[l], ConvSpec::new(ConvMode::Dense, 3, 2)?, true)?;
                let spfi = task.then(|| Spfi::new(init, &format!("enc{l}.spfi"), w[l - 1], w[l])).transpose()?;
                (Some(down), spfi)
            };
            let blocks = (0..cfg.blocks_per_stage[l])
                .map(|b| htb(init, format!("enc{l}.htb{b}"), l))
                .collect::<Result<_>>()?;
            let r = cfg.resolution(l);
            let tipb = (task && l < LEVELS - 1)
                .then(|| Tipb::new(init, &format!("enc{l}.tipb"), cfg.attn(l), r, r))
                .transpose()?;
            encoder.push(EncoderLevel { blocks, tipb, down, spfi });
        }
        let task_query = task.then(|| TaskQueryBuilder::new(init, "tq", [w[0], w[1], w[2]])).transpose()?;
        let mut decoder = Vec::with_capacity(LEVELS - 1);
        for l in 0..LEVELS - 1 {
            let up = Conv::pointwise(init, &format!("dec{l}.up"), w[l + 1], w[l])?;
            let blocks = (0..cfg.decoder_blocks[l])
                .map(|b| htb(init, format!("dec{l}.htb{b}"), l))
                .collect::<Result<_>>()?;
            let tsg = (task && TSG_LEVELS.contains(&l))
                .then(|| Tsg::new(init, &format!("dec{l}.tsg"), w[2], cfg.attn(l)))
                .transpose()?;
            decoder.push(DecoderLevel { up, blocks, tsg });
        }
        let mixup = MixupGate::new(init, "mixup", LEVELS - 1)?;
        let head = if cfg.zero_head {
            let weight = init.zeros("head.w", &dense3.weight_shape(w[0], 3))?;
            let bias = init.zeros("head.b", &[3])?;
            Conv { weight, bias: Some(bias), spec: dense3 }
        } else {
            Conv::new(init, "head", w[0], 3, dense3, true)?
        };
        Ok(Model { cfg: cfg.clone(), params, embed, encoder, task_query, decoder, mixup, head })
    }

    /// Unclamped restoration of `x: [3, S, S]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let s = self.cfg.image_size;
        if tape.shape(x) != [3, s, s] {
            return Err(Error::Shape { op: "model", lhs: tape.shape(x).to_vec(), rhs: alloc::vec![3, s, s] });
        }
        let mut h = self.embed.forward(tape, p, x)?;
        let mut skips = Vec::with_capacity(LEVELS);
        let mut pyramid = TaskFeaturePyramid::default();
        let mut task: Option<Var> = None;
        for level in &self.encoder {
            if let Some(down) = &level.down {
                h = down.forward(tape, p, h)?;
            }
            if let (Some(spfi), Some(t)) = (&level.spfi, task) {
                h = spfi.forward(tape, p, h, t)?;
            }
            for b in &level.blocks {
                h = b.forward(tape, p, h)?;
            }
            if let Some(tipb) = &level.tipb {
                let t = tipb.forward(tape, p, h)?;
                pyramid.push(t);
                task = Some(t);
            }
            skips.push(h);
        }
        let qtask = match &self.task_query {
            Some(tq) => Some(tq.forward(tape, p, &pyramid)?),
            None => None,
        };
        for l in (0..LEVELS - 1).rev() {
            let dec = &self.decoder[l];
            let up = tape.upsample2(h)?;
            let up = dec.up.forward(tape, p, up)?;
            h = self.mixup.forward(tape, p, skips[l], up, LEVELS - 1 - l)?;
            for b in &dec.blocks {
                h = b.forward(tape, p, h)?;
            }
            if let (Some(tsg), Some(q)) = (&dec.tsg, qtask) {
                h = tsg.forward(tape, p, h, q)?;
            }
        }
        let out = self.head.forward(tape, p, h)?;
        tape.add(x, out)
    }

    /// Forward pass with the current parameters, clamped to `[0, 1]`.
    /// Builds the network for `cfg` and replaces its freshly initialized
    /// parameters with `params`, which must carry exactly the same names and
    /// shapes.
    pub fn with_params(cfg: &NetConfig, params: ParameterStore) -> Result<Model> {
        let mut m = Model::build(cfg)?;
        for (name, t) in m.params.iter() {
            match params.get(name) {
                None => return Err(Error::Config(format!("parameter {name} missing from checkpoint"))),
                Some(p) if p.shape() != t.shape() => {
                    return Err(Error::Config(format!(
                        "parameter {name} has shape {:?} in checkpoint, model expects {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = params.names().find(|n| m.params.get(n).is_none()) {
            return Err(Error::Config(format!("checkpoint parameter {extra} is not part of the model")));
        }
        m.params = params;
        Ok(m)
    }

    pub fn restore(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &p, xv)?;
        Ok(tape.value(y).clamp(0.0, 1.0))
    }
}
