//! Training configuration as `key=value` text.

use std::fmt::Write as _;
use std::str::FromStr;

use hfrm_core::loss::LossWeights;
use hfrm_core::NetConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds parameter initialization and the per-epoch shuffle.
    pub seed: u64,
    pub weights: LossWeights,
    pub perceptual_seed: u64,
    /// 0-based epochs at which the rate halves; `None` uses 2/3 and 5/6 of
    /// `epochs`.
    pub milestones: Option<Vec<usize>>,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            epochs: 60,
            batch_size: 2,
            seed: 0,
            weights: LossWeights::default(),
            perceptual_seed: 0,
            milestones: None,
            net: NetConfig::default(),
        }
    }
}

fn list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Usage(format!("invalid value {v:?} for {key}")))
}

fn parse_array<const N: usize>(key: &str, v: &str) -> Result<[usize; N]> {
    let xs: Vec<usize> = v.split(',').map(|x| parse_one(key, x.trim())).collect::<Result<_>>()?;
    xs.try_into().map_err(|_| Error::Usage(format!("{key} needs {N} comma-separated values, got {v:?}")))
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.net.seed = seed;
        self
    }

    pub fn milestones(&self) -> Vec<usize> {
        self.milestones.clone().unwrap_or_else(|| hfrm_core::optim::milestones(self.epochs))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Usage("epochs and batch_size must be positive".into()));
        }
        let LossWeights { lambda, beta } = self.weights;
        if !(lambda >= 0.0 && beta >= 0.0) {
            return Err(Error::Usage("loss weights must be nonnegative".into()));
        }
        if self.seed != self.net.seed {
            return Err(Error::Usage("network seed must equal the training seed".into()));
        }
        self.net.validate()?;
        Ok(())
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let n = &self.net;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
        kv("learning_rate", self.learning_rate.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("seed", self.seed.to_string());
        kv("lambda", self.weights.lambda.to_string());
        kv("beta", self.weights.beta.to_string());
        kv("perceptual_seed", self.perceptual_seed.to_string());
        kv("milestones", self.milestones.as_deref().map_or("auto".into(), list));
        kv("stage_widths", list(&n.stage_widths));
        kv("blocks_per_stage", list(&n.blocks_per_stage));
        kv("decoder_blocks", list(&n.decoder_blocks));
        kv("heads", n.heads.to_string());
        kv("bins", n.bins.to_string());
        kv("bin_frequency", n.bin_frequency.to_string());
        kv("expansion", n.expansion.to_string());
        kv("image_size", n.image_size.to_string());
        kv("use_task_path", n.use_task_path.to_string());
        kv("use_histogram", n.use_histogram.to_string());
        kv("zero_head", n.zero_head.to_string());
        s
    }

    /// Reads `key=value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| Error::Usage(format!("config line {}: {e}", i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(Error::Usage(format!("expected key=value, got {line:?}"))))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(at(Error::Usage(format!("duplicate key {k}"))));
            }
            c.set(k, v).map_err(at)?;
        }
        c.net.seed = c.seed;
        Ok(c)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<()> {
        let n = &mut self.net;
        match k {
            "learning_rate" => self.learning_rate = parse_one(k, v)?,
            "epochs" => self.epochs = parse_one(k, v)?,
            "batch_size" => self.batch_size = parse_one(k, v)?,
            "seed" => self.seed = parse_one(k, v)?,
            "lambda" => self.weights.lambda = parse_one(k, v)?,
            "beta" => self.weights.beta = parse_one(k, v)?,
            "perceptual_seed" => self.perceptual_seed = parse_one(k, v)?,
            "milestones" => {
                self.milestones = match v {
                    "auto" => None,
                    "" => Some(Vec::new()),
                    _ => Some(v.split(',').map(|x| parse_one(k, x.trim())).collect::<Result<_>>()?),
                }
            }
            "stage_widths" => n.stage_widths = parse_array(k, v)?,
            "blocks_per_stage" => n.blocks_per_stage = parse_array(k, v)?,
            "decoder_blocks" => n.decoder_blocks = parse_array(k, v)?,
            "heads" => n.heads = parse_one(k, v)?,
            "bins" => n.bins = parse_one(k, v)?,
            "bin_frequency" => n.bin_frequency = parse_one(k, v)?,
            "expansion" => n.expansion = parse_one(k, v)?,
            "image_size" => n.image_size = parse_one(k, v)?,
            "use_task_path" => n.use_task_path = parse_one(k, v)?,
            "use_histogram" => n.use_histogram = parse_one(k, v)?,
            "zero_head" => n.zero_head = parse_one(k, v)?,
            _ => return Err(Error::Usage(format!("unknown key {k}"))),
        }
        Ok(())
    }
}
