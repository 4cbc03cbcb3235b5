//! Graphs, train/val/test splits, propagation matrices and synthetic
//! fixtures. Loading from disk lives in the std companion crate.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, SparseMatrix};

/// Undirected node-classification graph. Each edge is stored once with
/// `src < dst`; self-loops are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    name: String,
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    pub fn new(
        name: impl Into<String>,
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, &(s, d)) in edges.iter().enumerate() {
            if s >= d {
                return Err(Error::InvalidGraph(format!(
                    "edge {i} ({s},{d}) must satisfy src < dst (self-loops are not stored)"
                )));
            }
            if d >= num_nodes {
                return Err(Error::IndexOutOfRange {
                    what: "edge endpoint",
                    index: d,
                    limit: num_nodes,
                });
            }
            if !seen.insert((s, d)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({s},{d})")));
            }
        }
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::InvalidGraph(format!("{} labels for {num_nodes} nodes", labels.len())));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {y} of node {i} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            name: name.into(),
            num_nodes,
            edges,
            features,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(s, d) in &self.edges {
            deg[s] += 1;
            deg[d] += 1;
        }
        deg
    }

    /// Symmetric 0/1 adjacency without self-loops.
    pub fn adjacency(&self) -> SparseMatrix {
        let mut t = Vec::with_capacity(2 * self.edges.len());
        for &(s, d) in &self.edges {
            t.push((s, d, 1.0));
            t.push((d, s, 1.0));
        }
        SparseMatrix::from_triplets(self.num_nodes, self.num_nodes, &t).expect("validated edges")
    }

    /// Scales each feature row to sum to one; all-zero rows are left alone.
    pub fn row_normalize_features(&mut self) {
        for r in 0..self.features.rows() {
            let row = self.features.row_mut(r);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                for v in row {
                    *v /= s;
                }
            }
        }
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        self.features = features;
        Ok(self)
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::InvalidParameter("permutation length".into()));
        }
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(s, d)| {
                let (a, b) = (perm[s], perm[d]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        let mut features = Matrix::zeros(self.num_nodes, self.feature_dim());
        let mut labels = vec![0; self.num_nodes];
        for (old, &new) in perm.iter().enumerate() {
            features.row_mut(new).copy_from_slice(self.features.row(old));
            labels[new] = self.labels[old];
        }
        Graph::new(self.name.clone(), self.num_nodes, edges, features, labels, self.num_classes)
    }
}

/// Disjoint train/validation/test node sets.
///
/// Reads of the test indices are counted so that tests can assert the test
/// set is untouched until final evaluation.
#[derive(Debug)]
pub struct Split {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    test_reads: AtomicUsize,
}

impl Clone for Split {
    fn clone(&self) -> Self {
        Self {
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.test.clone(),
            test_reads: AtomicUsize::new(self.test_reads()),
        }
    }
}

impl PartialEq for Split {
    fn eq(&self, other: &Self) -> bool {
        self.train == other.train && self.val == other.val && self.test == other.test
    }
}

impl Split {
    pub fn new(train: Vec<usize>, val: Vec<usize>, test: Vec<usize>, num_nodes: usize) -> Result<Self> {
        let mut owner = vec![None::<&'static str>; num_nodes];
        for (name, set) in [("train", &train), ("val", &val), ("test", &test)] {
            for &i in set.iter() {
                if i >= num_nodes {
                    return Err(Error::InvalidSplit(format!(
                        "{name} index {i} out of range for {num_nodes} nodes"
                    )));
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::InvalidSplit(format!("node {i} appears in both {prev} and {name}")));
                }
                owner[i] = Some(name);
            }
        }
        Ok(Self {
            train,
            val,
            test,
            test_reads: AtomicUsize::new(0),
        })
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn val(&self) -> &[usize] {
        &self.val
    }

    /// Test indices. Every call is counted, see [`Split::test_reads`].
    pub fn test(&self) -> &[usize] {
        self.test_reads.fetch_add(1, Ordering::Relaxed);
        &self.test
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropagationKind {
    GcnRenorm,
    SymLaplacian,
    ChebScaled,
    MeanNeighbor,
    RawSelfLoop,
}

/// A sparse N×N operator derived from the graph structure.
#[derive(Debug, Clone)]
pub struct PropagationMatrix {
    pub kind: PropagationKind,
    pub matrix: Arc<SparseMatrix>,
}

/// `D̃^{-1/2}(A+I)D̃^{-1/2}` with degrees counted after adding self-loops.
pub fn gcn_renormalize(g: &Graph) -> PropagationMatrix {
    let deg: Vec<f64> = g.degrees().iter().map(|&d| (d + 1) as f64).collect();
    let mut t = Vec::with_capacity(2 * g.edges().len() + g.num_nodes());
    for i in 0..g.num_nodes() {
        t.push((i, i, 1.0 / deg[i]));
    }
    for &(s, d) in g.edges() {
        let w = 1.0 / libm::sqrt(deg[s] * deg[d]);
        t.push((s, d, w));
        t.push((d, s, w));
    }
    PropagationMatrix {
        kind: PropagationKind::GcnRenorm,
        matrix: Arc::new(SparseMatrix::from_triplets(g.num_nodes(), g.num_nodes(), &t).expect("valid")),
    }
}

/// `I − D^{-1/2} A D^{-1/2}`; isolated nodes contribute an identity row.
fn normalized_laplacian(g: &Graph) -> SparseMatrix {
    let deg = g.degrees();
    let mut t = Vec::with_capacity(2 * g.edges().len() + g.num_nodes());
    for i in 0..g.num_nodes() {
        t.push((i, i, 1.0));
    }
    for &(s, d) in g.edges() {
        let w = -1.0 / libm::sqrt((deg[s] * deg[d]) as f64);
        t.push((s, d, w));
        t.push((d, s, w));
    }
    SparseMatrix::from_triplets(g.num_nodes(), g.num_nodes(), &t).expect("valid")
}

/// Symmetric normalized Laplacian. Fails on isolated nodes.
pub fn sym_laplacian(g: &Graph) -> Result<PropagationMatrix> {
    if let Some(i) = g.degrees().iter().position(|&d| d == 0) {
        return Err(Error::IsolatedNode(i));
    }
    Ok(PropagationMatrix {
        kind: PropagationKind::SymLaplacian,
        matrix: Arc::new(normalized_laplacian(g)),
    })
}

/// `(2/λ_max)·L − I`, the Chebyshev-domain rescaling of the normalized
/// Laplacian. Isolated nodes keep an identity row in `L`.
pub fn cheb_scaled_laplacian(g: &Graph, lambda_max: f64) -> Result<PropagationMatrix> {
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let l = normalized_laplacian(g);
    Ok(PropagationMatrix {
        kind: PropagationKind::ChebScaled,
        matrix: Arc::new(l.scaled_plus_identity(2.0 / lambda_max, -1.0)?),
    })
}

/// Row-stochastic average over neighbors (self excluded); isolated nodes
/// get a zero row.
pub fn mean_neighbor(g: &Graph) -> PropagationMatrix {
    let deg = g.degrees();
    let mut t = Vec::with_capacity(2 * g.edges().len());
    for &(s, d) in g.edges() {
        t.push((s, d, 1.0 / deg[s] as f64));
        t.push((d, s, 1.0 / deg[d] as f64));
    }
    PropagationMatrix {
        kind: PropagationKind::MeanNeighbor,
        matrix: Arc::new(SparseMatrix::from_triplets(g.num_nodes(), g.num_nodes(), &t).expect("valid")),
    }
}

/// `A + I` with unit weights, the attention neighborhood pattern.
pub fn raw_self_loop(g: &Graph) -> PropagationMatrix {
    let mut t = Vec::with_capacity(2 * g.edges().len() + g.num_nodes());
    for i in 0..g.num_nodes() {
        t.push((i, i, 1.0));
    }
    for &(s, d) in g.edges() {
        t.push((s, d, 1.0));
        t.push((d, s, 1.0));
    }
    PropagationMatrix {
        kind: PropagationKind::RawSelfLoop,
        matrix: Arc::new(SparseMatrix::from_triplets(g.num_nodes(), g.num_nodes(), &t).expect("valid")),
    }
}

/// Synthetic graph families used as fixtures.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthKind {
    /// Stochastic block model; labels are block ids and features are the
    /// one-hot block id plus Gaussian noise of the given standard deviation.
    Sbm {
        blocks: usize,
        n: usize,
        p_in: f64,
        p_out: f64,
        feature_noise: f64,
    },
    /// `rows × cols` lattice; label 0 for the top half, 1 for the bottom.
    Grid { rows: usize, cols: usize },
    /// Node 0 joined to `n − 1` leaves; the hub has label 0, leaves label 1.
    Star { n: usize },
    /// Citation-network-like graph with bag-of-words features.
    Citation(CitationParams),
}

/// Parameters of the citation-like generator.
///
/// Each class owns a contiguous block of the vocabulary; a node draws
/// `words_per_node` distinct words, each from its own class block with
/// probability `topic_strength` and uniformly otherwise. Every node first
/// links to one partner, then random edges are added up to `avg_degree`;
/// each partner is same-class with probability `homophily`. The split takes
/// `train_per_class` nodes of each class for training, then `val` and `test`
/// nodes from the remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct CitationParams {
    pub name: String,
    pub nodes: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub avg_degree: f64,
    pub homophily: f64,
    pub words_per_node: usize,
    pub topic_strength: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl CitationParams {
    /// Same node/feature/class counts, edge density and public split sizes
    /// as the Cora citation graph.
    pub fn cora_like() -> Self {
        Self {
            name: "cora-synthetic".into(),
            nodes: 2708,
            classes: 7,
            feature_dim: 1433,
            avg_degree: 3.9,
            homophily: 0.81,
            words_per_node: 18,
            topic_strength: 0.2,
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Deterministic synthetic graph plus split for the given seed.
pub fn synth_graph(kind: &SynthKind, seed: u64) -> Result<(Graph, Split)> {
    let mut rng = crate::rng_from_seed(seed);
    match kind {
        SynthKind::Sbm {
            blocks,
            n,
            p_in,
            p_out,
            feature_noise,
        } => {
            let (blocks, n) = (*blocks, *n);
            if blocks == 0 || n < blocks {
                return Err(Error::InvalidParameter(format!("sbm needs 1 ≤ blocks ≤ n, got {blocks}, {n}")));
            }
            for p in [*p_in, *p_out] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!("sbm probability {p} outside [0,1]")));
                }
            }
            let labels: Vec<usize> = (0..n).map(|i| i * blocks / n).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let p = if labels[i] == labels[j] { *p_in } else { *p_out };
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            let features = noisy_one_hot(&labels, blocks, *feature_noise, &mut rng);
            let graph = Graph::new("sbm", n, edges, features, labels, blocks)?;
            let split = fractional_split(n, &mut rng)?;
            Ok((graph, split))
        }
        SynthKind::Grid { rows, cols } => {
            let (rows, cols) = (*rows, *cols);
            if rows == 0 || cols == 0 || rows * cols < 2 {
                return Err(Error::InvalidParameter("grid needs at least two nodes".into()));
            }
            let id = |r: usize, c: usize| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        edges.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            let n = rows * cols;
            let labels: Vec<usize> = (0..n).map(|i| usize::from(i / cols >= rows.div_ceil(2))).collect();
            let features = noisy_one_hot(&labels, 2, 1.0, &mut rng);
            let graph = Graph::new("grid", n, edges, features, labels, 2)?;
            let split = fractional_split(n, &mut rng)?;
            Ok((graph, split))
        }
        SynthKind::Star { n } => {
            let n = *n;
            if n < 2 {
                return Err(Error::InvalidParameter("star needs at least two nodes".into()));
            }
            let edges = (1..n).map(|i| (0, i)).collect();
            let labels: Vec<usize> = (0..n).map(|i| usize::from(i > 0)).collect();
            let features = noisy_one_hot(&labels, 2, 1.0, &mut rng);
            let graph = Graph::new("star", n, edges, features, labels, 2)?;
            let split = fractional_split(n, &mut rng)?;
            Ok((graph, split))
        }
        SynthKind::Citation(p) => citation_graph(p, &mut rng),
    }
}

fn noisy_one_hot(labels: &[usize], classes: usize, noise: f64, rng: &mut crate::Rng) -> Matrix {
    Matrix::from_fn(labels.len(), classes, |i, j| {
        let base = if labels[i] == j { 1.0 } else { 0.0 };
        base + noise * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Random 30% / 20% / 50% split.
fn fractional_split(n: usize, rng: &mut crate::Rng) -> Result<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (n * 3 / 10).max(1);
    let n_val = (n / 5).max(1).min(n - n_train);
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    Split::new(train, val, test, n)
}

fn citation_graph(p: &CitationParams, rng: &mut crate::Rng) -> Result<(Graph, Split)> {
    if p.classes < 2 || p.nodes < p.classes * (p.train_per_class + 1) || p.feature_dim < p.classes {
        return Err(Error::InvalidParameter("citation generator: too few nodes, classes or features".into()));
    }
    if p.train_per_class * p.classes + p.val + p.test > p.nodes {
        return Err(Error::InvalidParameter("citation generator: split larger than graph".into()));
    }
    if p.words_per_node == 0 || p.words_per_node > p.feature_dim / p.classes {
        return Err(Error::InvalidParameter("citation generator: words_per_node out of range".into()));
    }
    for v in [p.homophily, p.topic_strength] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("citation generator: probability {v} outside [0,1]")));
        }
    }
    let n = p.nodes;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..p.classes)).collect();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); p.classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if by_class.iter().any(|c| c.len() <= p.train_per_class) {
        return Err(Error::InvalidParameter("citation generator: a class is too small".into()));
    }

    let pick_partner = |u: usize, rng: &mut crate::Rng| -> usize {
        if rng.random::<f64>() < p.homophily {
            let same = &by_class[labels[u]];
            same[rng.random_range(0..same.len())]
        } else {
            rng.random_range(0..n)
        }
    };
    let mut edge_set = BTreeSet::new();
    for u in 0..n {
        for _ in 0..16 {
            let v = pick_partner(u, rng);
            if v != u && edge_set.insert((u.min(v), u.max(v))) {
                break;
            }
        }
    }
    let target = (p.avg_degree * n as f64 / 2.0) as usize;
    let mut guard = 0;
    while edge_set.len() < target && guard < 100 * target {
        guard += 1;
        let u = rng.random_range(0..n);
        let v = pick_partner(u, rng);
        if u != v {
            edge_set.insert((u.min(v), u.max(v)));
        }
    }
    let edges: Vec<(usize, usize)> = edge_set.into_iter().collect();

    let block = p.feature_dim / p.classes;
    let mut features = Matrix::zeros(n, p.feature_dim);
    for i in 0..n {
        let mut words = BTreeSet::new();
        while words.len() < p.words_per_node {
            let w = if rng.random::<f64>() < p.topic_strength {
                labels[i] * block + rng.random_range(0..block)
            } else {
                rng.random_range(0..p.feature_dim)
            };
            words.insert(w);
        }
        for w in words {
            features.set(i, w, 1.0);
        }
    }

    let mut train = Vec::new();
    let mut rest = Vec::new();
    for members in &mut by_class {
        members.shuffle(rng);
        train.extend_from_slice(&members[..p.train_per_class]);
        rest.extend_from_slice(&members[p.train_per_class..]);
    }
    train.sort_unstable();
    rest.shuffle(rng);
    let val = rest[..p.val].to_vec();
    let test = rest[p.val..p.val + p.test].to_vec();
    let graph = Graph::new(p.name.clone(), n, edges, features, labels, p.classes)?;
    let split = Split::new(train, val, test, n)?;
    Ok((graph, split))
}
