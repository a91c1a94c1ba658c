//! Modal-domain fault analysis and single-ended protection for a four-terminal
//! MMC-HVDC grid with current limiting reactors.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analytic;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod impedance;
pub mod laplace;
pub mod modal;
pub mod network;
pub mod params;
pub mod relay;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod trace;

pub use error::{Error, Result};
pub use exec::Execution;
