//! Binary checkpoints: configuration, parameters, Adam moments and progress.
//!
//! Layout, little-endian: `HFRM`, `u32` version, `u64` length + UTF-8 config
//! text, `u64` completed epochs, `u64` Adam step, `u64` record count, then per
//! record a `u8` tag (0 parameter, 1 first moment, 2 second moment), `u32`
//! name length + name, `u32` rank, `u64` dims and `f64` values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hfrm_core::optim::{Adam, AdamConfig};
use hfrm_core::{Model, ParameterStore, Tensor};

use crate::config::TrainConfig;
use crate::error::{io_err, Error, Result};

const MAGIC: &[u8; 4] = b"HFRM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Epochs completed.
    pub epoch: usize,
    pub params: ParameterStore,
    pub adam: Adam,
}

impl Checkpoint {
    /// Freshly initialized model and zero moments.
    pub fn fresh(config: &TrainConfig) -> Result<Checkpoint> {
        config.validate()?;
        let model = Model::build(&config.net)?;
        let adam = Adam::new(AdamConfig::default(), &model.params);
        Ok(Checkpoint { config: config.clone(), epoch: 0, params: model.params, adam })
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model::with_params(&self.config.net, self.params.clone())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        let text = self.config.to_text();
        b.extend_from_slice(&(text.len() as u64).to_le_bytes());
        b.extend_from_slice(text.as_bytes());
        b.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        b.extend_from_slice(&self.adam.step.to_le_bytes());
        let count = self.params.len() + self.adam.m.len() + self.adam.v.len();
        b.extend_from_slice(&(count as u64).to_le_bytes());
        let tables = [(0u8, self.params.iter().collect::<Vec<_>>()), (1, by_name(&self.adam.m)), (2, by_name(&self.adam.v))];
        for (tag, table) in tables {
            for (name, t) in table {
                b.push(tag);
                b.extend_from_slice(&(name.len() as u32).to_le_bytes());
                b.extend_from_slice(name.as_bytes());
                b.extend_from_slice(&(t.rank() as u32).to_le_bytes());
                for &d in t.shape() {
                    b.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for v in t.data() {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.fail("not an HFRM checkpoint"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.fail(&format!("unsupported checkpoint version {version}")));
        }
        let len = r.len("config length")?;
        let text = std::str::from_utf8(r.take(len, "config")?).map_err(|_| r.fail("config is not UTF-8"))?;
        let config = TrainConfig::parse(text)?;
        let epoch = r.len("epoch")?;
        let step = r.u64("adam step")?;
        let count = r.len("record count")?;
        let mut tables: [BTreeMap<String, Tensor>; 3] = Default::default();
        for _ in 0..count {
            let tag = r.take(1, "record tag")?[0] as usize;
            if tag > 2 {
                return Err(r.fail(&format!("unknown record tag {tag}")));
            }
            let n = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(n, "name")?).map_err(|_| r.fail("name is not UTF-8"))?.to_string();
            let rank = r.u32("rank")? as usize;
            let shape = (0..rank).map(|_| r.len("dimension")).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.fail("shape overflows"))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| r.fail("shape overflows"))?, "tensor data")?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            if tables[tag].insert(name.clone(), Tensor::new(&shape, data)?).is_some() {
                return Err(r.fail(&format!("duplicate record {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes"));
        }
        let [p, m, v] = tables;
        let mut params = ParameterStore::new();
        for (name, t) in p {
            params.insert(&name, t)?;
        }
        for (which, table) in [("first", &m), ("second", &v)] {
            for (name, t) in params.iter() {
                match table.get(name) {
                    Some(x) if x.shape() == t.shape() => {}
                    _ => return Err(Error::Data(format!("{which} Adam moment of {name} missing or misshapen"))),
                }
            }
            if table.len() != params.len() {
                return Err(Error::Data(format!("{which} Adam moments name unknown parameters")));
            }
        }
        let adam = Adam { cfg: AdamConfig::default(), step, m, v };
        Ok(Checkpoint { config, epoch, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, self.to_bytes()).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            e => e,
        })
    }
}

fn by_name(m: &BTreeMap<String, Tensor>) -> Vec<(&str, &Tensor)> {
    m.iter().map(|(k, v)| (k.as_str(), v)).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: &str) -> Error {
        Error::Data(format!("checkpoint offset {}: {msg}", self.pos))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.fail(&format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| self.fail(&format!("{what} {v} too large")))
    }
}
