//! Numerical checks of the linear-algebra facts the search relies on:
//! output-layer compensation for frozen weights, dictionary coherence,
//! spectra of weight products, the polynomial dictionary form of linear
//! GNNs, convergence of cross-entropy descent, and gradient checks.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{gcn_renormalize, synth_graph, Graph, SynthKind};
use crate::init::{init_matrix, InitScheme};
use crate::linalg::{chain_product, singular_values, solve};
use crate::operators::{apply_operator, init_operator_params, GraphContext, OperatorKind, DEFAULT_CHEB_ORDER};
use crate::search::{alpha_gradient, nac_objective, l1_norm};
use crate::supernet::{build_supernet, Activation, SearchSpaceConfig, Trainable};
use crate::tensor::{Matrix, SparseMatrix, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Skipped => "skipped",
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub check: String,
    pub status: Status,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

fn gaussian(rows: usize, cols: usize, rng: &mut crate::Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Erdős–Rényi graph with Gaussian features and a single class.
pub fn random_graph(n: usize, p: f64, feature_dim: usize, rng: &mut crate::Rng) -> Result<Graph> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new("random", n, edges, gaussian(n, feature_dim, rng), vec![0; n], 1)
}

/// `F = A^L X W_1 ⋯ W_L W_o` with square, initially full-rank `W_l`.
#[derive(Debug, Clone)]
pub struct LinearGnnInstance {
    pub a: SparseMatrix,
    pub x: Matrix,
    pub weights: Vec<Matrix>,
    pub w_o: Matrix,
    /// ±1 targets for the two-class reading of the output.
    pub labels: Vec<f64>,
}

impl LinearGnnInstance {
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Random instance on an `n`-node graph with `d` features, `depth`
    /// layers drawn with `scheme`, and a d×2 output layer.
    pub fn random(n: usize, d: usize, depth: usize, scheme: InitScheme, rng: &mut crate::Rng) -> Result<Self> {
        if depth == 0 || d == 0 || n == 0 {
            return Err(Error::InvalidParameter("instance sizes must be positive".into()));
        }
        let g = random_graph(n, (3.0 / n as f64).min(1.0), d, rng)?;
        let a = (*gcn_renormalize(&g).matrix).clone();
        let weights = (0..depth).map(|_| init_matrix(d, d, scheme, rng)).collect();
        let w_o = gaussian(d, 2, rng);
        let labels = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Ok(Self {
            a,
            x: g.features().clone(),
            weights,
            w_o,
            labels,
        })
    }

    /// `A^L X`.
    pub fn propagated(&self) -> Result<Matrix> {
        let mut h = self.x.clone();
        for _ in 0..self.depth() {
            h = self.a.mul_dense(&h)?;
        }
        Ok(h)
    }

    /// Network output with the given layer and output weights.
    pub fn output(&self, weights: &[Matrix], w_o: &Matrix) -> Result<Matrix> {
        let mut h = self.propagated()?;
        for w in weights {
            h = h.matmul(w)?;
        }
        h.matmul(w_o)
    }
}

/// `W̃_o = (Π W_l(0))⁻¹ Π W*_l W*_o`: the output layer that makes the frozen
/// network reproduce the trained one.
pub fn construct_tilde_wo(inst: &LinearGnnInstance, trained: &[Matrix], trained_wo: &Matrix) -> Result<Matrix> {
    if trained.len() != inst.depth() {
        return Err(Error::ConfigMismatch(format!(
            "{} trained layers for a depth-{} instance",
            trained.len(),
            inst.depth()
        )));
    }
    let p0 = chain_product(&inst.weights)?;
    let smallest = singular_values(&p0).last().copied().unwrap_or(0.0);
    if smallest <= 1e-8 {
        return Err(Error::Singular { smallest });
    }
    let target = chain_product(trained)?.matmul(trained_wo)?;
    solve(&p0, &target)
}

/// Relative Frobenius gap between the frozen network with `W̃_o` and the
/// trained network.
pub fn verify_output_equivalence(
    inst: &LinearGnnInstance,
    trained: &[Matrix],
    trained_wo: &Matrix,
    tol: f64,
) -> Result<Verdict> {
    let tilde = construct_tilde_wo(inst, trained, trained_wo)?;
    let frozen = inst.output(&inst.weights, &tilde)?;
    let reference = inst.output(trained, trained_wo)?;
    let gap = frozen.relative_error(&reference);
    Ok(Verdict {
        check: "theorem1".into(),
        status: Status::from_bool(gap <= tol),
        value: gap,
        tolerance: tol,
        detail: format!("depth {}, hidden {}", inst.depth(), inst.x.cols()),
    })
}

/// Runs the output-equivalence check on `count` random instances with
/// n ≤ 64, d ≤ 16, L ≤ 4 and reports the worst gap.
pub fn theorem1_suite(count: usize, tol: f64, seed: u64) -> Result<Verdict> {
    let mut rng = crate::rng_from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.random_range(4..=64);
        let d = rng.random_range(2..=16);
        let depth = rng.random_range(1..=4);
        let inst = LinearGnnInstance::random(n, d, depth, InitScheme::Orthogonal, &mut rng)?;
        let trained: Vec<Matrix> = (0..depth).map(|_| gaussian(d, d, &mut rng)).collect();
        let trained_wo = gaussian(d, 2, &mut rng);
        worst = worst.max(verify_output_equivalence(&inst, &trained, &trained_wo, tol)?.value);
    }
    Ok(Verdict {
        check: "theorem1".into(),
        status: Status::from_bool(worst <= tol),
        value: worst,
        tolerance: tol,
        detail: format!("worst relative gap over {count} instances"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub n: usize,
    pub k: usize,
    /// Largest `|cos|` between distinct columns.
    pub max: f64,
    pub mean: f64,
    /// Counts of `|cos|` over ten equal bins of [0, 1].
    pub histogram: [usize; 10],
}

pub fn mutual_coherence(d: &Matrix) -> Result<CoherenceReport> {
    let (n, k) = d.shape();
    let gram = d.t_matmul(d)?;
    let norms: Vec<f64> = (0..k).map(|j| libm::sqrt(gram.get(j, j))).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut histogram = [0usize; 10];
    for i in 0..k {
        for j in i + 1..k {
            let c = (libm::fabs(gram.get(i, j)) / (norms[i] * norms[j])).min(1.0);
            max = max.max(c);
            sum += c;
            histogram[((c * 10.0) as usize).min(9)] += 1;
        }
    }
    let pairs = k * k.saturating_sub(1) / 2;
    Ok(CoherenceReport {
        n,
        k,
        max,
        mean: if pairs == 0 { 0.0 } else { sum / pairs as f64 },
        histogram,
    })
}

/// First `k` columns of the `n×n` Sylvester–Hadamard matrix scaled to unit
/// norm. `n` must be a power of two.
pub fn hadamard_dictionary(n: usize, k: usize) -> Result<Matrix> {
    if !n.is_power_of_two() || k > n {
        return Err(Error::InvalidParameter(format!("hadamard dictionary needs a power-of-two n >= k, got {n}×{k}")));
    }
    let s = 1.0 / libm::sqrt(n as f64);
    Ok(Matrix::from_fn(n, k, |i, j| if (i & j).count_ones() % 2 == 0 { s } else { -s }))
}

/// Coherence of `seeds` Gaussian n×k dictionaries against a threshold.
pub fn coherence_suite(n: usize, k: usize, seeds: usize, threshold: f64, required: usize) -> Result<Verdict> {
    let mut below = 0;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = crate::rng_from_seed(seed as u64);
        let report = mutual_coherence(&gaussian(n, k, &mut rng))?;
        worst = worst.max(report.max);
        if report.max < threshold {
            below += 1;
        }
    }
    let ortho = mutual_coherence(&hadamard_dictionary(n.next_power_of_two(), k)?)?.max;
    Ok(Verdict {
        check: "coherence".into(),
        status: Status::from_bool(below >= required && ortho == 0.0),
        value: below as f64,
        tolerance: threshold,
        detail: format!(
            "{below}/{seeds} Gaussian {n}x{k} dictionaries below {threshold} (worst {worst:.4}); orthonormal dictionary coherence {ortho}"
        ),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub scheme: Option<InitScheme>,
    /// Singular values of the product, descending.
    pub values: Vec<f64>,
    pub condition: f64,
}

/// Singular values and condition number of `W_1 ⋯ W_L`.
pub fn spectrum(weights: &[Matrix], scheme: Option<InitScheme>) -> Result<SpectrumReport> {
    if let Some(w) = weights.iter().find(|w| w.rows() != w.cols()) {
        return Err(Error::Shape {
            op: "spectrum",
            lhs: w.shape(),
            rhs: (w.rows(), w.rows()),
        });
    }
    let values = singular_values(&chain_product(weights)?);
    let smallest = values.last().copied().unwrap_or(0.0);
    let condition = if smallest > 0.0 { values[0] / smallest } else { f64::INFINITY };
    Ok(SpectrumReport {
        scheme,
        values,
        condition,
    })
}

pub fn spectrum_for_scheme(scheme: InitScheme, hidden: usize, layers: usize, seed: u64) -> Result<SpectrumReport> {
    let mut rng = crate::rng_from_seed(seed);
    let weights: Vec<Matrix> = (0..layers).map(|_| init_matrix(hidden, hidden, scheme, &mut rng)).collect();
    spectrum(&weights, Some(scheme))
}

/// Orthogonal products are flat; Kaiming-normal products are worse
/// conditioned on at least `required` of `seeds`.
pub fn spectrum_suite(hidden: usize, layers: usize, seeds: usize, required: usize) -> Result<Verdict> {
    let mut worst_orth = 0.0f64;
    let mut larger = 0;
    for seed in 0..seeds as u64 {
        let o = spectrum_for_scheme(InitScheme::Orthogonal, hidden, layers, seed)?;
        let k = spectrum_for_scheme(InitScheme::KaimingNormal, hidden, layers, seed)?;
        worst_orth = worst_orth.max(o.condition);
        if k.condition > o.condition {
            larger += 1;
        }
    }
    let tol = 1.0 + 1e-5;
    Ok(Verdict {
        check: "spectrum".into(),
        status: Status::from_bool(worst_orth <= tol && larger >= required),
        value: worst_orth,
        tolerance: tol,
        detail: format!(
            "orthogonal condition number at most {worst_orth:.12}; kaiming-normal larger on {larger}/{seeds} seeds"
        ),
    })
}

/// A linear layer written as `Σ_c S^c H C_c` for a fixed propagation `S`.
fn monomial_coefficients(kind: OperatorKind, weights: &[Matrix]) -> Result<Vec<Matrix>> {
    let d = weights[0].rows();
    match kind {
        OperatorKind::Gcn => Ok(vec![Matrix::zeros(d, d), weights[0].clone()]),
        OperatorKind::Cheb { order } => {
            // Monomial expansion of T_c(s): T_0 = 1, T_1 = s, T_c = 2 s T_{c-1} - T_{c-2}.
            let mut t: Vec<Vec<f64>> = vec![vec![1.0], vec![0.0, 1.0]];
            for c in 2..=order {
                let mut next = vec![0.0; c + 1];
                for (m, v) in t[c - 1].iter().enumerate() {
                    next[m + 1] += 2.0 * v;
                }
                for (m, v) in t[c - 2].iter().enumerate() {
                    next[m] -= v;
                }
                t.push(next);
            }
            let mut coeffs = vec![Matrix::zeros(d, d); order + 1];
            for (c, w) in weights.iter().enumerate() {
                for (m, &v) in t[c].iter().enumerate() {
                    if v != 0.0 {
                        coeffs[m].axpy(v, w)?;
                    }
                }
            }
            Ok(coeffs)
        }
        other => Err(Error::InvalidParameter(format!("{other} is not a polynomial filter"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryFormReport {
    pub status: Status,
    /// Frobenius norm of `network(X) - D W`.
    pub residual: f64,
    /// Number of atoms `S^m X` in `D`.
    pub atoms: usize,
    pub note: String,
}

/// Expands a stack of linear polynomial-filter layers into `D W` with
/// `D = [X, S X, S² X, …]` and compares against the layers evaluated
/// directly by the operator implementations.
pub fn dictionary_form_check(
    graph: &Graph,
    kind: OperatorKind,
    layer_weights: &[Vec<Matrix>],
    activation: Activation,
) -> Result<DictionaryFormReport> {
    if activation != Activation::Identity {
        return Ok(DictionaryFormReport {
            status: Status::Skipped,
            residual: f64::NAN,
            atoms: 0,
            note: "nonlinear: out of corollary scope".into(),
        });
    }
    let ctx = GraphContext::new(graph)?;
    let s = match kind {
        OperatorKind::Gcn => ctx.gcn.matrix.clone(),
        OperatorKind::Cheb { .. } => ctx.cheb.matrix.clone(),
        other => return Err(Error::InvalidParameter(format!("{other} is not a polynomial filter"))),
    };

    let mut tape = Tape::new();
    let mut h = tape.constant(graph.features().clone());
    for ws in layer_weights {
        let vars: Vec<_> = ws.iter().map(|w| tape.constant(w.clone())).collect();
        h = apply_operator(&mut tape, kind, &vars, &ctx, h)?;
    }
    let direct = tape.value(h).clone();

    // Cauchy product of the per-layer coefficient sequences.
    let mut total: Vec<Matrix> = vec![Matrix::identity(graph.feature_dim())];
    for ws in layer_weights {
        let layer = monomial_coefficients(kind, ws)?;
        let cols = layer[0].cols();
        let mut next = vec![Matrix::zeros(total[0].rows(), cols); total.len() + layer.len() - 1];
        for (i, a) in total.iter().enumerate() {
            for (j, b) in layer.iter().enumerate() {
                next[i + j].axpy(1.0, &a.matmul(b)?)?;
            }
        }
        total = next;
    }
    let mut atoms = Vec::with_capacity(total.len());
    let mut p = graph.features().clone();
    for m in 0..total.len() {
        if m > 0 {
            p = s.mul_dense(&p)?;
        }
        atoms.push(p.clone());
    }
    let d = Matrix::hcat(&atoms.iter().collect::<Vec<_>>())?;
    let w = Matrix::vcat(&total.iter().collect::<Vec<_>>())?;
    let residual = direct.sub(&d.matmul(&w)?)?.frobenius_norm();
    Ok(DictionaryFormReport {
        status: Status::Pass,
        residual,
        atoms: atoms.len(),
        note: format!("{} layers of {kind}", layer_weights.len()),
    })
}

/// Two-layer linear GCN and Chebyshev stacks on `graphs` random graphs.
pub fn dictionary_suite(graphs: usize, tol: f64, seed: u64) -> Result<Verdict> {
    let mut rng = crate::rng_from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..graphs {
        let n = rng.random_range(6..=20);
        let d = rng.random_range(2..=6);
        let g = random_graph(n, 0.3, d, &mut rng)?;
        for kind in [
            OperatorKind::Gcn,
            OperatorKind::Cheb {
                order: DEFAULT_CHEB_ORDER,
            },
        ] {
            let weights: Vec<Vec<Matrix>> = (0..2)
                .map(|_| init_operator_params(kind, d, InitScheme::KaimingNormal, &mut rng).tensors)
                .collect();
            let r = dictionary_form_check(&g, kind, &weights, Activation::Identity)?;
            worst = worst.max(r.residual);
        }
    }
    Ok(Verdict {
        check: "dictionary-form".into(),
        status: Status::from_bool(worst <= tol),
        value: worst,
        tolerance: tol,
        detail: format!("worst residual over {graphs} graphs, gcn and cheb"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub losses: Vec<f64>,
    /// Weights after each step, starting from zero.
    pub iterates: Vec<[f64; 2]>,
    /// Least-squares fit of `‖w_t − w_T‖ ≈ c · r^t` over the first
    /// `fit_steps` steps.
    pub decay_factor: f64,
    pub separable: bool,
}

/// Gradient descent on the mean logistic loss of a bias-free linear model
/// in the plane. `labels` are ±1.
pub fn ce_convergence_probe(points: &[[f64; 2]], labels: &[f64], steps: usize, lr: f64, fit_steps: usize) -> Result<ConvergenceReport> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(Error::InvalidParameter("points and labels must be non-empty and of equal length".into()));
    }
    let n = points.len() as f64;
    let loss_grad = |w: [f64; 2]| {
        let mut loss = 0.0;
        let mut g = [0.0; 2];
        for (x, &y) in points.iter().zip(labels) {
            let m = y * (w[0] * x[0] + w[1] * x[1]);
            // log(1 + e^{-m}) and its derivative, stable for large |m|.
            loss += if m > 0.0 { libm::log1p(libm::exp(-m)) } else { -m + libm::log1p(libm::exp(m)) };
            let s = 1.0 / (1.0 + libm::exp(m));
            g[0] -= y * x[0] * s;
            g[1] -= y * x[1] * s;
        }
        (loss / n, [g[0] / n, g[1] / n])
    };
    let mut w = [0.0; 2];
    let mut losses = Vec::with_capacity(steps + 1);
    let mut iterates = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let (l, g) = loss_grad(w);
        losses.push(l);
        iterates.push(w);
        w = [w[0] - lr * g[0], w[1] - lr * g[1]];
    }
    iterates.pop();
    iterates.push(w);
    let last = *iterates.last().expect("non-empty");
    let separable = points
        .iter()
        .zip(labels)
        .all(|(x, &y)| y * (last[0] * x[0] + last[1] * x[1]) > 0.0);

    let fit = fit_steps.min(steps);
    let pts: Vec<(f64, f64)> = (0..fit)
        .filter_map(|t| {
            let d = libm::hypot(iterates[t][0] - last[0], iterates[t][1] - last[1]);
            (d > 0.0).then(|| (t as f64, libm::log(d)))
        })
        .collect();
    let decay_factor = if pts.len() < 2 {
        0.0
    } else {
        let m = pts.len() as f64;
        let (st, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mt, my) = (st / m, sy / m);
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        libm::exp(cov / var)
    };
    Ok(ConvergenceReport {
        losses,
        iterates,
        decay_factor,
        separable,
    })
}

/// Two Gaussian blobs centred at `±center`, `per_class` points each.
pub fn separable_blobs(per_class: usize, center: [f64; 2], spread: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut rng = crate::rng_from_seed(seed);
    let mut pts = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for &y in &[1.0, -1.0] {
        for _ in 0..per_class {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            pts.push([y * center[0] + spread * a, y * center[1] + spread * b]);
            labels.push(y);
        }
    }
    (pts, labels)
}

/// Logistic descent on two separable blobs. The tolerance is the open upper
/// bound on the fitted decay factor; no rate is promised beyond `(0, 1)`.
pub fn convergence_verdict(seed: u64) -> Result<Verdict> {
    let (pts, labels) = separable_blobs(25, [1.5, -1.0], 0.4, seed);
    let r = ce_convergence_probe(&pts, &labels, 300, 0.1, 100)?;
    let decreasing = r.losses.windows(2).all(|w| w[1] <= w[0]);
    Ok(Verdict {
        check: "convergence".into(),
        status: Status::from_bool(r.decay_factor > 0.0 && r.decay_factor < 1.0 && decreasing),
        value: r.decay_factor,
        tolerance: 1.0,
        detail: format!(
            "fitted decay factor over 100 steps, final loss {:.3e}, separable {}",
            r.losses.last().copied().unwrap_or(f64::NAN),
            r.separable
        ),
    })
}

/// One analytic-versus-finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub name: String,
    pub relative_error: f64,
}

fn central_difference(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> Result<f64>) -> Result<Matrix> {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let mut p = x.clone();
        p.data_mut()[i] += h;
        let mut m = x.clone();
        m.data_mut()[i] -= h;
        out.data_mut()[i] = (f(&p)? - f(&m)?) / (2.0 * h);
    }
    Ok(out)
}

/// Gradient of the search objective with respect to `α`, and of every
/// operator with respect to its input, against central differences on a
/// 12-node two-block graph.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradientCheck>> {
    let h = 1e-6;
    let (g, split) = synth_graph(
        &SynthKind::Sbm {
            blocks: 2,
            n: 12,
            p_in: 0.5,
            p_out: 0.1,
            feature_noise: 0.5,
        },
        seed,
    )?;
    let mut rng = crate::rng_from_seed(seed);
    let mut checks = Vec::new();

    let space = SearchSpaceConfig {
        hidden_dim: 4,
        operators: OperatorKind::ALL.to_vec(),
        ..SearchSpaceConfig::default()
    };
    let mut net = build_supernet(&space, &g, seed)?;
    net.alpha = Matrix::from_fn(net.alpha.rows(), net.alpha.cols(), |_, _| {
        let v = 0.2 + rng.random::<f64>();
        if rng.random::<bool>() {
            v
        } else {
            -v
        }
    });
    let rho = 0.01;
    let trainable = Trainable {
        alpha: true,
        ..Trainable::default()
    };
    let obj = nac_objective(&net, &g, &split, rho, trainable, None)?;
    let (_, _, analytic) = alpha_gradient(&net, obj)?;
    let alpha0 = net.alpha.clone();
    let numeric = central_difference(&alpha0, h, |a| {
        net.alpha = a.clone();
        let o = nac_objective(&net, &g, &split, rho, Trainable::default(), None)?;
        Ok(o.ce + rho * l1_norm(a))
    })?;
    checks.push(GradientCheck {
        name: "objective/alpha".into(),
        relative_error: analytic.relative_error(&numeric),
    });

    let ctx = GraphContext::new(&g)?;
    for kind in OperatorKind::ALL {
        let params = init_operator_params(kind, 4, InitScheme::Orthogonal, &mut rng);
        let x = Matrix::from_fn(g.num_nodes(), 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let probe = Matrix::from_fn(g.num_nodes(), 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let eval = |x: &Matrix, want_grad: bool| -> Result<(f64, Option<Matrix>)> {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone(), want_grad);
            let pv = params.register(&mut tape, false);
            let y = apply_operator(&mut tape, kind, &pv, &ctx, xv)?;
            let w = tape.constant(probe.clone());
            let m = tape.mul(y, w)?;
            let s = tape.sum(m);
            let value = tape.scalar(s);
            let grad = if want_grad { tape.backward(s)?.take(xv) } else { None };
            Ok((value, grad))
        };
        let analytic = eval(&x, true)?.1.expect("input gradient");
        let numeric = central_difference(&x, h, |m| Ok(eval(m, false)?.0))?;
        checks.push(GradientCheck {
            name: format!("operator/{kind}"),
            relative_error: analytic.relative_error(&numeric),
        });
    }
    Ok(checks)
}

pub fn gradient_verdict(seed: u64, tol: f64) -> Result<Verdict> {
    let checks = gradient_suite(seed)?;
    let worst = checks.iter().fold(0.0f64, |m, c| m.max(c.relative_error));
    let name = checks
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .map(|c| c.name.clone())
        .unwrap_or_default();
    Ok(Verdict {
        check: "gradients".into(),
        status: Status::from_bool(worst <= tol),
        value: worst,
        tolerance: tol,
        detail: format!("{} checks, worst {name}", checks.len()),
    })
}
