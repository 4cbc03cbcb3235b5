//! Dense and sparse matrices plus a define-by-run reverse-mode tape.

mod matrix;
mod sparse;
mod tape;

pub use matrix::Matrix;
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
