#![allow(dead_code)]

use nac_core::graph::Split;
use nac_core::theory::random_graph;
use nac_core::{rng_from_seed, Graph, Matrix};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-6;

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn fd_gradient(x: &Matrix, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

pub fn rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let diff = analytic.sub(numeric).expect("same shape").frobenius_norm();
    diff / analytic.frobenius_norm().max(numeric.frobenius_norm()).max(1e-12)
}

pub fn uniform(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Connected-ish random graph with every node labelled, plus a 4/4/rest split.
pub fn small_graph(n: usize, feature_dim: usize, classes: usize, seed: u64) -> (Graph, Split) {
    let mut rng = rng_from_seed(seed);
    let g = random_graph(n, 0.3, feature_dim, &mut rng).expect("graph");
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let g = Graph::new("small", n, g.edges().to_vec(), g.features().clone(), labels, classes).expect("labels");
    let idx: Vec<usize> = (0..n).collect();
    let split = Split::new(idx[..4].to_vec(), idx[4..8].to_vec(), idx[8..].to_vec(), n).expect("split");
    (g, split)
}
