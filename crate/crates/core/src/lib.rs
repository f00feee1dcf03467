#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cde;
pub mod conformal;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod hpd;
pub mod math;
pub mod partition;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
