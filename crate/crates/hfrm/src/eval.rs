//! PSNR/SSIM reports of restored and degraded images against clean ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use hfrm_core::metrics::{psnr, ssim};
use hfrm_core::weather::Kind;
use hfrm_core::Model;

use crate::dataset::Sample;
use crate::error::{Error, Result};

/// Mean metrics over a group of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Row {
    pub count: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Degraded input against clean.
    pub base_psnr: f64,
    pub base_ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub per_kind: BTreeMap<Kind, Row>,
    pub overall: Row,
}

impl Row {
    fn add(&mut self, p: f64, s: f64, bp: f64, bs: f64) {
        self.count += 1;
        self.psnr += p;
        self.ssim += s;
        self.base_psnr += bp;
        self.base_ssim += bs;
    }

    fn mean(mut self) -> Row {
        let n = self.count as f64;
        self.psnr /= n;
        self.ssim /= n;
        self.base_psnr /= n;
        self.base_ssim /= n;
        self
    }
}

pub fn evaluate(model: &Model, data: &[Sample]) -> Result<Report> {
    if data.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let mut per_kind: BTreeMap<Kind, Row> = BTreeMap::new();
    let mut overall = Row::default();
    for s in data {
        let restored = model.restore(&s.degraded)?;
        let m = (
            psnr(&restored, &s.clean, 1.0)?,
            ssim(&restored, &s.clean)?,
            psnr(&s.degraded, &s.clean, 1.0)?,
            ssim(&s.degraded, &s.clean)?,
        );
        per_kind.entry(s.kind).or_default().add(m.0, m.1, m.2, m.3);
        overall.add(m.0, m.1, m.2, m.3);
    }
    Ok(Report { per_kind: per_kind.into_iter().map(|(k, r)| (k, r.mean())).collect(), overall: overall.mean() })
}

impl Report {
    fn rows(&self) -> impl Iterator<Item = (&str, &Row)> {
        self.per_kind.iter().map(|(k, r)| (k.name(), r)).chain([("overall", &self.overall)])
    }

    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>5} {:>9} {:>7} {:>9} {:>7}\n", "kind", "n", "psnr", "ssim", "base_psnr", "base_ssim");
        for (name, r) in self.rows() {
            writeln!(
                s,
                "{:<10} {:>5} {:>9.3} {:>7.4} {:>9.3} {:>7.4}",
                name, r.count, r.psnr, r.ssim, r.base_psnr, r.base_ssim
            )
            .expect("string write");
        }
        s
    }

    /// `metric,name,value` lines at full precision.
    pub fn lines(&self) -> String {
        let mut s = String::new();
        for (name, r) in self.rows() {
            for (metric, v) in [
                ("count", r.count as f64),
                ("psnr", r.psnr),
                ("ssim", r.ssim),
                ("psnr_degraded", r.base_psnr),
                ("ssim_degraded", r.base_ssim),
            ] {
                writeln!(s, "{metric},{name},{v}").expect("string write");
            }
        }
        s
    }
}
