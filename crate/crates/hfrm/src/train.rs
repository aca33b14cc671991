//! Deterministic single-threaded training loop.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use hfrm_core::loss::{total_loss, PerceptualExtractor};
use hfrm_core::optim::{lr_at, Adam};
use hfrm_core::{Model, SeededRng, Tape, Tensor};

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::dataset::Sample;
use crate::error::{io_err, Error, Result};

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const LOG: &str = "train.log";

/// Loss terms, summed or averaged over samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Terms {
    pub total: f64,
    pub l1: f64,
    pub perc: f64,
    pub freq: f64,
}

impl Terms {
    fn add(&mut self, o: &Terms) {
        self.total += o.total;
        self.l1 += o.l1;
        self.perc += o.perc;
        self.freq += o.freq;
    }

    fn scaled(&self, s: f64) -> Terms {
        Terms { total: self.total * s, l1: self.l1 * s, perc: self.perc * s, freq: self.freq * s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's samples.
    pub terms: Terms,
}

impl EpochStats {
    pub fn log_line(&self) -> String {
        let t = &self.terms;
        format!("epoch={} lr={} total={} l1={} perc={} freq={}", self.epoch, self.lr, t.total, t.l1, t.perc, t.freq)
    }
}

/// Sample order of 0-based `epoch`: a Fisher-Yates shuffle seeded by
/// `(seed, epoch)` alone, so resumed runs see the same order.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = SeededRng::derive(seed, epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.below(i + 1));
    }
    order
}

pub struct Trainer<'a> {
    config: TrainConfig,
    model: Model,
    adam: Adam,
    epoch: usize,
    milestones: Vec<usize>,
    extractor: PerceptualExtractor,
    data: &'a [Sample],
}

impl<'a> Trainer<'a> {
    pub fn new(config: &TrainConfig, data: &'a [Sample]) -> Result<Self> {
        Trainer::resume(Checkpoint::fresh(config)?, data)
    }

    pub fn resume(ck: Checkpoint, data: &'a [Sample]) -> Result<Self> {
        ck.config.validate()?;
        if data.is_empty() {
            return Err(Error::Data("no samples to train on".into()));
        }
        let s = ck.config.net.image_size;
        if let Some(bad) = data.iter().position(|d| d.clean.shape() != [3, s, s]) {
            return Err(Error::Data(format!(
                "sample {bad} has shape {:?}, the model expects [3, {s}, {s}]",
                data[bad].clean.shape()
            )));
        }
        let model = ck.model()?;
        Ok(Trainer {
            milestones: ck.config.milestones(),
            extractor: PerceptualExtractor::new(ck.config.perceptual_seed),
            config: ck.config,
            model,
            adam: ck.adam,
            epoch: ck.epoch,
            data,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Epochs completed.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Optimizer steps taken.
    pub fn steps(&self) -> u64 {
        self.adam.step
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epoch: self.epoch,
            params: self.model.params.clone(),
            adam: self.adam.clone(),
        }
    }

    fn sample_loss(&self, s: &Sample, backward: bool) -> Result<(Terms, Vec<(String, Tensor)>)> {
        let mut tape = Tape::new();
        let p = self.model.params.bind(&mut tape);
        let x = tape.constant(s.degraded.clone());
        let y = tape.constant(s.clean.clone());
        let out = self.model.forward(&mut tape, &p, x)?;
        let l = total_loss(&mut tape, out, y, &self.config.weights, &self.extractor)?;
        let v = |h| tape.value(h).item();
        let terms = Terms { total: v(l.total), l1: v(l.l1), perc: v(l.perceptual), freq: v(l.frequency) };
        for (name, x) in [("smooth_l1", terms.l1), ("perceptual", terms.perc), ("frequency", terms.freq)] {
            if !x.is_finite() {
                return Err(Error::Numeric(format!(
                    "{name} loss became {x} at epoch {} ({:?} sample)",
                    self.epoch + 1,
                    s.kind.name()
                )));
            }
        }
        if !backward {
            return Ok((terms, Vec::new()));
        }
        tape.backward(l.total)?;
        Ok((terms, p.gradients(&tape)))
    }

    /// Mean loss terms of the current parameters over all samples.
    pub fn evaluate(&self) -> Result<Terms> {
        let mut sum = Terms::default();
        for s in self.data {
            sum.add(&self.sample_loss(s, false)?.0);
        }
        Ok(sum.scaled(1.0 / self.data.len() as f64))
    }

    /// One Adam update on the mean gradient of `batch`; returns the summed
    /// loss terms.
    pub fn step(&mut self, batch: &[usize], lr: f64) -> Result<Terms> {
        let mut sum = Terms::default();
        let mut grads: Vec<(String, Tensor)> = Vec::new();
        for &i in batch {
            let (t, g) = self.sample_loss(&self.data[i], true)?;
            sum.add(&t);
            if grads.is_empty() {
                grads = g;
            } else {
                for ((name, acc), (gname, g)) in grads.iter_mut().zip(&g) {
                    debug_assert_eq!(name, gname);
                    acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|(_, g)| g.data_mut().iter_mut().for_each(|v| *v *= inv));
        self.adam.update(&mut self.model.params, &grads, lr)?;
        Ok(sum)
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let lr = lr_at(self.config.learning_rate, self.epoch, &self.milestones);
        let order = epoch_order(self.data.len(), self.config.seed, self.epoch);
        let mut sum = Terms::default();
        for batch in order.chunks(self.config.batch_size) {
            sum.add(&self.step(batch, lr)?);
        }
        self.epoch += 1;
        Ok(EpochStats { epoch: self.epoch, lr, terms: sum.scaled(1.0 / self.data.len() as f64) })
    }
}

/// Trains into `out`, writing the checkpoint after every epoch and appending
/// log lines to `out/train.log` and `log`. Stops after epoch `until` when
/// given, otherwise at the configured epoch count.
pub fn run(
    ck: Checkpoint,
    data: &[Sample],
    out: &Path,
    until: Option<usize>,
    log: &mut dyn Write,
) -> Result<Checkpoint> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let log_path = out.join(LOG);
    let mut file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
    let ck_path = out.join(CHECKPOINT);
    let mut t = Trainer::resume(ck, data)?;
    let stop = until.unwrap_or(usize::MAX);
    if t.epoch() >= stop {
        t.checkpoint().save(&ck_path)?;
    }
    while !t.finished() && t.epoch() < stop {
        let line = t.run_epoch()?.log_line();
        writeln!(file, "{line}").map_err(io_err(&log_path))?;
        writeln!(log, "{line}").map_err(io_err(Path::new("<stdout>")))?;
        t.checkpoint().save(&ck_path)?;
    }
    Ok(t.checkpoint())
}
