//! `hfrm synth | train | eval | restore`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hfrm_core::metrics::psnr;
use hfrm_core::weather::Mix;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::error::{io_err, Error, Result};
use crate::{dataset, eval, ppm, train};

/// Overrides the training seed of `train`.
pub const SEED_VAR: &str = "HF_SEED";

#[derive(Debug, Parser)]
#[command(name = "hfrm", version, about = "Multi-weather image restoration with histogram transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize degraded/clean PPM pairs and a manifest.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Kind weights, e.g. `haze=1,rain=1,snow=2,rain+haze=1`.
        #[arg(long, default_value = "haze=1,rain=1,snow=1,rain+haze=1")]
        mix: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset, checkpointing every epoch.
    Train {
        /// Dataset directory or manifest file.
        #[arg(long)]
        data: PathBuf,
        /// `key=value` configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many completed epochs.
        #[arg(long)]
        until: Option<usize>,
    },
    /// Report PSNR/SSIM of restored and degraded images per kind.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Restore one PPM image.
    Restore {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Clean reference; prints PSNR of input and output against it.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
}

fn train_config(path: Option<&Path>, env_seed: Option<&str>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::parse(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = env_seed {
        let seed = s.trim().parse().map_err(|_| Error::Usage(format!("{SEED_VAR}={s:?} is not an unsigned integer")))?;
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn first_difference(a: &TrainConfig, b: &TrainConfig) -> String {
    let (ta, tb) = (a.to_text(), b.to_text());
    ta.lines()
        .zip(tb.lines())
        .find(|(x, y)| x != y)
        .map_or_else(String::new, |(x, y)| format!(" (checkpoint {x}, requested {y})"))
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

/// Runs one command, writing reports to `out`.
pub fn execute(cmd: Command, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Synth { count, size, mix, seed, out: dir } => {
            let mix = Mix::parse(&mix)?;
            let records = dataset::synth(&dir, count, size, &mix, seed)?;
            say(out, &format!("wrote {} pairs to {}\n", records.len(), dir.display()))
        }
        Command::Train { data, config, out: dir, resume, until } => {
            let cfg = train_config(config.as_deref(), env_seed)?;
            let ck = match resume {
                Some(p) => {
                    let ck = Checkpoint::load(&p)?;
                    if ck.config != cfg {
                        return Err(Error::Usage(format!(
                            "config/checkpoint mismatch{}",
                            first_difference(&ck.config, &cfg)
                        )));
                    }
                    ck
                }
                None => Checkpoint::fresh(&cfg)?,
            };
            let samples = dataset::load(&data)?;
            let done = train::run(ck, &samples, &dir, until, out)?;
            say(out, &format!("checkpoint {} after epoch {}\n", dir.join(train::CHECKPOINT).display(), done.epoch))
        }
        Command::Eval { data, checkpoint } => {
            let model = Checkpoint::load(&checkpoint)?.model()?;
            let samples = dataset::load(&data)?;
            let report = eval::evaluate(&model, &samples)?;
            say(out, &report.table())?;
            say(out, &report.lines())
        }
        Command::Restore { checkpoint, input, out: path, gt } => {
            let model = Checkpoint::load(&checkpoint)?.model()?;
            let img = ppm::read(&input)?;
            let s = model.cfg.image_size;
            if img.shape() != [3, s, s] {
                return Err(Error::Data(format!(
                    "{} is {}x{}, the model expects {s}x{s}",
                    input.display(),
                    img.shape()[2],
                    img.shape()[1]
                )));
            }
            let restored = model.restore(&img)?;
            ppm::write(&path, &restored)?;
            if let Some(gt) = gt {
                let clean = ppm::read(&gt)?;
                let before = psnr(&img, &clean, 1.0)?;
                let after = psnr(&ppm::quantize(&restored), &clean, 1.0)?;
                say(out, &format!("psnr_input={before} psnr_restored={after}\n"))?;
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command, env_seed, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
