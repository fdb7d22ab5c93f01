//! Half-space log-gamma polymers, last-passage percolation and their KPZ
//! scaling: exact recurrences, stationary samplers and statistical checks.

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod kpz;
pub mod lattice;
pub mod lpp;
pub mod mc;
pub mod rng;
pub mod she;
pub mod special;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;
