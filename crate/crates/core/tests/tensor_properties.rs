mod common;

use std::sync::Arc;

use common::{fd_gradient, rel_err, uniform};
use nac_core::{Matrix, SparseMatrix, Tape, Var};
use proptest::prelude::*;

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

/// Largest relative error between tape gradients and central differences of
/// `⟨R, f(inputs)⟩` for a fixed random weighting `R`.
fn worst_grad_error(inputs: &[Matrix], seed: u64, build: &Build) -> f64 {
    let loss = |xs: &[Matrix], tape: &mut Tape, grad: bool| -> (Var, Vec<Var>) {
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), grad)).collect();
        let out = build(tape, &vars);
        let (r, c) = tape.value(out).shape();
        let w = tape.constant(uniform(r, c, seed ^ 0xabcd));
        let prod = tape.mul(out, w).unwrap();
        (tape.sum(prod), vars)
    };
    let mut tape = Tape::new();
    let (l, vars) = loss(inputs, &mut tape, true);
    let grads = tape.backward(l).unwrap();
    let mut worst = 0.0_f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Matrix::zeros(inputs[i].rows(), inputs[i].cols()));
        let numeric = fd_gradient(&inputs[i], |x| {
            let mut xs = inputs.to_vec();
            xs[i] = x.clone();
            let mut t = Tape::new();
            let (l, _) = loss(&xs, &mut t, false);
            t.scalar(l)
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

fn pattern(n: usize, seed: u64) -> Arc<SparseMatrix> {
    let m = uniform(n, n, seed);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || m.get(i, j) > 0.3 {
                triplets.push((i, j, 1.0));
            }
        }
    }
    Arc::new(SparseMatrix::from_triplets(n, n, &triplets).unwrap())
}

fn random_sparse(rows: usize, cols: usize, seed: u64) -> SparseMatrix {
    let m = uniform(rows, cols, seed);
    let mut triplets = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if m.get(i, j) > 0.4 {
                triplets.push((i, j, m.get(i, j)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, &triplets).unwrap()
}

const TOL: f64 = 1e-5;

#[test]
fn every_differentiable_op_matches_finite_differences() {
    let seed = 7;
    let a = uniform(5, 4, 1);
    let b = uniform(5, 4, 2);
    let sq = uniform(4, 3, 3);
    let row = uniform(1, 4, 4);
    let s = Arc::new(random_sparse(5, 5, 5));
    let p = pattern(5, 6);
    let col = uniform(5, 1, 8);
    let col2 = uniform(5, 1, 9);
    let nnz = p.nnz();
    let edge_w = uniform(nnz, 1, 10);
    let coeffs = uniform(1, 3, 11);

    let cases: Vec<(&str, Vec<Matrix>, Box<Build>)> = vec![
        ("matmul", vec![a.clone(), sq.clone()], Box::new(|t, v| t.matmul(v[0], v[1]).unwrap())),
        ("spmm", vec![a.clone()], {
            let s = s.clone();
            Box::new(move |t, v| t.spmm(&s, v[0]).unwrap())
        }),
        ("add", vec![a.clone(), b.clone()], Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        ("sub", vec![a.clone(), b.clone()], Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("add_row", vec![a.clone(), row.clone()], Box::new(|t, v| t.add_row(v[0], v[1]).unwrap())),
        ("mul", vec![a.clone(), b.clone()], Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("scale", vec![a.clone()], Box::new(|t, v| t.scale(v[0], -2.5))),
        ("relu", vec![a.clone()], Box::new(|t, v| t.relu(v[0]))),
        ("leaky_relu", vec![a.clone()], Box::new(|t, v| t.leaky_relu(v[0], 0.2))),
        ("tanh", vec![a.clone()], Box::new(|t, v| t.tanh(v[0]))),
        ("elu", vec![a.clone()], Box::new(|t, v| t.elu(v[0]))),
        ("row_softmax", vec![a.clone()], Box::new(|t, v| t.row_softmax(v[0]))),
        ("concat_cols", vec![a.clone(), b.clone()], Box::new(|t, v| t.concat_cols(v[0], v[1]).unwrap())),
        ("select_row", vec![a.clone()], Box::new(|t, v| t.select_row(v[0], 2).unwrap())),
        ("l2_normalize", vec![a.clone()], Box::new(|t, v| t.l2_normalize(v[0]).unwrap())),
        ("row_normalize", vec![a.clone()], Box::new(|t, v| t.row_normalize(v[0], 1e-12))),
        ("weighted_sum", vec![coeffs.clone(), a.clone(), b.clone(), a.map(|x| x * x)], Box::new(|t, v| t.weighted_sum(v[0], &v[1..]).unwrap())),
        ("edge_scores", vec![col.clone(), col2.clone()], {
            let p = p.clone();
            Box::new(move |t, v| t.edge_scores(&p, Some(v[0]), Some(v[1])).unwrap())
        }),
        ("edge_dot", vec![a.clone(), b.clone()], {
            let p = p.clone();
            Box::new(move |t, v| t.edge_dot(&p, v[0], v[1]).unwrap())
        }),
        ("edge_softmax", vec![edge_w.clone()], {
            let p = p.clone();
            Box::new(move |t, v| t.edge_softmax(&p, v[0]).unwrap())
        }),
        ("edge_aggregate", vec![edge_w.clone(), a.clone()], {
            let p = p.clone();
            Box::new(move |t, v| t.edge_aggregate(&p, v[0], v[1]).unwrap())
        }),
        ("neighbor_max", vec![a.clone()], {
            let p = p.clone();
            Box::new(move |t, v| t.neighbor_max(&p, v[0]).unwrap())
        }),
    ];
    for (name, inputs, build) in &cases {
        let err = worst_grad_error(inputs, seed, build.as_ref());
        assert!(err <= TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let logits = uniform(6, 3, 21);
    let labels = [0, 1, 2, 2, 1, 0];
    let mask = [0, 2, 3, 5];
    let mut tape = Tape::new();
    let x = tape.leaf(logits.clone(), true);
    let l = tape.cross_entropy(x, &labels, &mask).unwrap();
    let g = tape.backward(l).unwrap().get(x).unwrap().clone();
    let numeric = fd_gradient(&logits, |m| {
        let mut t = Tape::new();
        let x = t.leaf(m.clone(), false);
        let l = t.cross_entropy(x, &labels, &mask).unwrap();
        t.scalar(l)
    });
    assert!(rel_err(&g, &numeric) <= 1e-6);
}

#[test]
fn fan_out_sums_path_contributions() {
    // y = relu(x·W) used twice; compare with two independent copies of x.
    let x0 = uniform(4, 3, 31);
    let w0 = uniform(3, 3, 32);
    let mut t = Tape::new();
    let x = t.leaf(x0.clone(), true);
    let w = t.constant(w0.clone());
    let h = t.matmul(x, w).unwrap();
    let y = t.tanh(h);
    let z = t.mul(y, y).unwrap();
    let s1 = t.sum(z);
    let s2 = t.sum(h);
    let s = t.add(s1, s2).unwrap();
    let shared = t.backward(s).unwrap().get(x).unwrap().clone();

    let mut t = Tape::new();
    let xa = t.leaf(x0.clone(), true);
    let xb = t.leaf(x0, true);
    let w = t.constant(w0);
    let ha = t.matmul(xa, w).unwrap();
    let hb = t.matmul(xb, w).unwrap();
    let ya = t.tanh(ha);
    let z = t.mul(ya, ya).unwrap();
    let s1 = t.sum(z);
    let s2 = t.sum(hb);
    let s = t.add(s1, s2).unwrap();
    let g = t.backward(s).unwrap();
    let split = g.get(xa).unwrap().add(g.get(xb).unwrap()).unwrap();
    assert!(shared.max_abs_diff(&split) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spmm_agrees_with_dense(rows in 1usize..16, inner in 1usize..16, cols in 1usize..8, seed in any::<u64>()) {
        let s = random_sparse(rows, inner, seed);
        let d = uniform(inner, cols, seed.wrapping_add(1));
        let sparse = s.mul_dense(&d).unwrap();
        let dense = s.to_dense().matmul(&d).unwrap();
        prop_assert!(sparse.max_abs_diff(&dense) <= 1e-12);
        let t_sparse = s.t_mul_dense(&uniform(rows, cols, seed.wrapping_add(2))).unwrap();
        let t_dense = s.to_dense().t_matmul(&uniform(rows, cols, seed.wrapping_add(2))).unwrap();
        prop_assert!(t_sparse.max_abs_diff(&t_dense) <= 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..10, cols in 1usize..10, scale in 0.1f64..50.0, seed in any::<u64>()) {
        let mut t = Tape::new();
        let x = t.leaf(uniform(rows, cols, seed).scale(scale), false);
        let y = t.row_softmax(x);
        for r in 0..rows {
            let s: f64 = t.value(y).row(r).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn matmul_gradient_matches_fd(n in 1usize..6, k in 1usize..6, m in 1usize..6, seed in any::<u64>()) {
        let a = uniform(n, k, seed);
        let b = uniform(k, m, seed.wrapping_add(9));
        let mut t = Tape::new();
        let av = t.leaf(a.clone(), true);
        let bv = t.constant(b.clone());
        let p = t.matmul(av, bv).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap().get(av).unwrap().clone();
        let numeric = fd_gradient(&a, |x| x.matmul(&b).unwrap().sum());
        prop_assert!(rel_err(&g, &numeric) <= 1e-7);
    }
}
