//! Dataset files, result formats and the `nac` command line on top of
//! `nac-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod report;

pub use error::{NacError, Result};

use std::time::Instant;

/// Wall-clock time since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl nac_core::Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1000.0
    }
}
