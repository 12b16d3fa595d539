//! Delta-sigma pulse density modulation for series-series compensated
//! wireless power transfer links, with notch noise shaping that removes the
//! subharmonics exciting abnormal current oscillations.

pub mod analysis;
pub mod config;
pub mod dsm;
pub mod error;
pub mod experiments;
pub mod gating;
pub mod gssa;
pub mod plant;

pub use error::{Error, Result};
