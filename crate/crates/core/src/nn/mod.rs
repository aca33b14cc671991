//! Architectural blocks of the restoration network.

pub mod config;
pub mod histogram;
pub mod htb;
pub mod layers;
pub mod mixup;
pub mod msff;
pub mod spfi;
pub mod tipb;
pub mod tsg;

pub use config::{AttentionConfig, HistConfig, MsffConfig};
pub use histogram::{dynamic_range_conv, histogram_attention, histogram_branch, restore_order, Dhsa, DrcOrder, DynamicRangeConv};
pub use htb::Htb;
pub use layers::{Conv, Ffn, LayerNorm};
pub use mixup::{adaptive_mixup, MixupGate};
pub use msff::Msff;
pub use spfi::Spfi;
pub use tipb::Tipb;
pub use tsg::{TaskFeaturePyramid, TaskQueryBuilder, Tsg};
