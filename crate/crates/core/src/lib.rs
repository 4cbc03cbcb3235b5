//! Neural architecture coding (NAC) for graph neural networks.
//!
//! The search network keeps every GNN weight frozen at its random
//! (orthogonal by default) initialization and learns only the per-layer
//! operator mixing coefficients `alpha` under a cross-entropy plus L1
//! objective. The chosen architecture is the per-layer argmax of `|alpha|`.
//!
//! This crate is `no_std` + `alloc`. File formats, the CLI and wall-clock
//! timing live in the companion `nac` crate; enable the `std` feature to let
//! the dense kernels use runtime CPU feature detection.
//!
//! Layout:
//! - [`tensor`]: dense/CSR matrices and the define-by-run gradient tape
//! - [`linalg`]: QR, symmetric eigen, SVD and LU solves for small dense problems
//! - [`graph`]: graphs, splits, propagation matrices, synthetic fixtures
//! - [`init`] / [`operators`]: weight initialization and the candidate aggregators
//! - [`supernet`], [`search`], [`optim`]: the search itself
//! - [`eval`]: retraining, baselines, timing summaries
//! - [`theory`]: numerical checks of the underlying linear-algebra claims

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod error;
pub mod eval;
pub mod graph;
pub mod init;
pub mod linalg;
pub mod operators;
pub mod optim;
pub mod search;
pub mod supernet;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{Graph, Split};
pub use operators::OperatorKind;
pub use supernet::{ArchitectureSelection, SearchSpaceConfig, Supernet};
pub use tensor::{Matrix, SparseMatrix, Tape, Var};

/// Milliseconds since an arbitrary origin. The core has no clock of its own;
/// the std companion passes one in.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Clock that always reads zero. Timings recorded with it are all 0.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// Seeded RNG used everywhere in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
