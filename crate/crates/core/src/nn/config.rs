use alloc::format;

use crate::error::{Error, Result};

/// Multi-head attention geometry: `width = heads * key_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub heads: usize,
    pub key_dim: usize,
    pub width: usize,
}

impl AttentionConfig {
    pub fn new(width: usize, heads: usize) -> Result<Self> {
        if heads == 0 || width == 0 || width % heads != 0 {
            return Err(Error::Config(format!(
                "stage width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(AttentionConfig {
            heads,
            key_dim: width / heads,
            width,
        })
    }
}

/// Bin geometry of the two histogram reshapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistConfig {
    /// Number of bins of the bin-based reshape.
    pub bins: usize,
    /// Elements per bin of the frequency-based reshape.
    pub bin_frequency: usize,
}

impl HistConfig {
    pub fn new(bins: usize, bin_frequency: usize) -> Result<Self> {
        if bins == 0 || bin_frequency == 0 {
            return Err(Error::Config("histogram bin counts must be positive".into()));
        }
        Ok(HistConfig { bins, bin_frequency })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsffConfig {
    pub expansion: usize,
}

impl MsffConfig {
    pub fn new(expansion: usize) -> Result<Self> {
        if expansion == 0 {
            return Err(Error::Config("MSFF expansion must be positive".into()));
        }
        Ok(MsffConfig { expansion })
    }

    /// Expanded width, which must split evenly across the two branches.
    pub fn hidden(&self, width: usize) -> Result<usize> {
        let h = self.expansion * width;
        if h % 2 != 0 {
            return Err(Error::Config(format!("expanded width {h} is odd")));
        }
        Ok(h)
    }
}
