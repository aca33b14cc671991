//! On-disk datasets: PPM image pairs listed in a tab-separated manifest.

use std::fs;
use std::path::{Path, PathBuf};

use hfrm_core::weather::{make_dataset, ImagePair, Kind, Mix};
use hfrm_core::Tensor;

use crate::error::{io_err, Error, Result};
use crate::ppm;

pub const MANIFEST: &str = "manifest.tsv";
const HEADER: &str = "index\tkind\tseed\tparams\tclean\tdegraded";

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub index: usize,
    pub kind: Kind,
    pub seed: u64,
    pub params: String,
    pub clean: String,
    pub degraded: String,
}

/// A loaded training or evaluation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub kind: Kind,
    pub clean: Tensor,
    pub degraded: Tensor,
}

impl Sample {
    /// The pair as it reads back from 8-bit PPM files.
    pub fn from_pair(p: &ImagePair) -> Sample {
        Sample { kind: p.kind(), clean: ppm::quantize(&p.clean), degraded: ppm::quantize(&p.degraded) }
    }
}

pub fn render_manifest(records: &[Record]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for r in records {
        s += &format!("{}\t{}\t{}\t{}\t{}\t{}\n", r.index, r.kind, r.seed, r.params, r.clean, r.degraded);
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<Record>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == HEADER => {}
        _ => return Err(Error::Data(format!("manifest must start with the header {HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Data(format!("manifest line {}: {what}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad(&format!("expected 6 tab-separated fields, got {}", f.len())));
        }
        out.push(Record {
            index: f[0].parse().map_err(|_| bad("bad index"))?,
            kind: Kind::parse(f[1]).map_err(|e| bad(&e.to_string()))?,
            seed: f[2].parse().map_err(|_| bad("bad seed"))?,
            params: f[3].to_string(),
            clean: f[4].to_string(),
            degraded: f[5].to_string(),
        });
    }
    Ok(out)
}

/// Synthesizes `count` pairs and writes them with a manifest into `dir`.
pub fn synth(dir: &Path, count: usize, size: usize, mix: &Mix, seed: u64) -> Result<Vec<Record>> {
    let pairs = make_dataset(count, size, mix, seed)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut records = Vec::with_capacity(count);
    for (i, (sample_seed, pair)) in pairs.iter().enumerate() {
        let (clean, degraded) = (format!("{i:05}_clean.ppm"), format!("{i:05}_degraded.ppm"));
        ppm::write(&dir.join(&clean), &pair.clean)?;
        ppm::write(&dir.join(&degraded), &pair.degraded)?;
        records.push(Record {
            index: i,
            kind: pair.kind(),
            seed: *sample_seed,
            params: pair.params.summary(),
            clean,
            degraded,
        });
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, render_manifest(&records)).map_err(io_err(&path))?;
    Ok(records)
}

/// Accepts a dataset directory or the manifest file itself.
pub fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST)
    } else {
        data.to_path_buf()
    }
}

/// Reads the manifest and every image it lists.
pub fn load(data: &Path) -> Result<Vec<Sample>> {
    let path = manifest_path(data);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text)?
        .into_iter()
        .map(|r| {
            let clean = ppm::read(&dir.join(&r.clean))?;
            let degraded = ppm::read(&dir.join(&r.degraded))?;
            if clean.shape() != degraded.shape() {
                return Err(Error::Data(format!("pair {} has mismatched image sizes", r.index)));
            }
            Ok(Sample { kind: r.kind, clean, degraded })
        })
        .collect()
}
