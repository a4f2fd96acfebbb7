//! MLC NAND flash retention simulator.
//!
//! The crate models threshold-voltage drift under retention and wear,
//! senses pages against read references, judges reads with a genie ECC, and
//! implements two controller techniques: retention-optimized read-retry and
//! offline recovery of uncorrectable pages by leak-speed classification.

// Validation uses `!(x > lo)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod ecc;
pub mod error;
pub mod harness;
pub mod read;
pub mod rfr;
pub mod ror;
pub mod seed;

pub use channel::{Block, Cell, ChannelParams, PageKind, State};
pub use ecc::{DecodeOutcome, EccConfig};
pub use error::{Error, Result};
pub use harness::{Device, DeviceConfig};
pub use read::{ReadRefs, Threshold};
pub use rfr::RfrConfig;
pub use ror::{RorConfig, VoltageTable};
