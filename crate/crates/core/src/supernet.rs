//! The one-shot search network: an input projection, `L` mixed layers over
//! `K` candidate operators and a linear output layer.
//!
//! Layer `l` computes `h_l = φ((Σ_k α_lk / ‖α_l‖₂ · o_lk(h_{l-1})) W_l)` and
//! the logits are `h_L W_o`. Nothing inside the network has a bias or dropout,
//! so a zero input propagates to zero logits.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::init::{init_matrix, orthogonal, InitScheme};
use crate::operators::{apply_operator, init_operator_params, GraphContext, OperatorKind, OperatorParams};
use crate::tensor::{Matrix, SparseMatrix, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Elu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Elu => "elu",
            Self::Identity => "identity",
        }
    }

    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Self::Relu => tape.relu(x),
            Self::Elu => tape.elu(x),
            Self::Identity => x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::Relu),
            "elu" => Ok(Self::Elu),
            "identity" | "linear" | "none" => Ok(Self::Identity),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpaceConfig {
    pub num_layers: usize,
    pub operators: Vec<OperatorKind>,
    pub hidden_dim: usize,
    pub init_scheme: InitScheme,
    pub activation: Activation,
    /// Used only when an architecture is retrained.
    pub dropout: f64,
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            operators: OperatorKind::DEFAULT_SEARCH_SPACE.to_vec(),
            hidden_dim: 64,
            init_scheme: InitScheme::Orthogonal,
            activation: Activation::Relu,
            dropout: 0.5,
        }
    }
}

impl SearchSpaceConfig {
    pub fn num_operators(&self) -> usize {
        self.operators.len()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::InvalidParameter("num_layers must be at least 1".into()));
        }
        if self.operators.is_empty() {
            return Err(Error::InvalidParameter("operator list is empty".into()));
        }
        if self.hidden_dim < num_classes.max(1) {
            return Err(Error::InvalidParameter(format!(
                "hidden_dim {} is smaller than the number of classes {num_classes}",
                self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Which parameter groups are put on the tape as trainable leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Trainable {
    pub alpha: bool,
    pub output: bool,
    pub weights: bool,
}

/// Tape handles for every parameter of a [`Supernet`].
#[derive(Debug, Clone)]
pub struct NetVars {
    pub alpha: Var,
    pub input_proj: Var,
    pub layer_weights: Vec<Var>,
    pub op_params: Vec<Vec<Vec<Var>>>,
    pub output: Var,
}

#[derive(Debug, Clone)]
pub struct Supernet {
    pub config: SearchSpaceConfig,
    pub alpha: Matrix,
    pub input_proj: Matrix,
    pub layer_weights: Vec<Matrix>,
    pub operator_params: Vec<Vec<OperatorParams>>,
    pub output_weights: Matrix,
    features: Arc<SparseMatrix>,
    ctx: GraphContext,
}

/// Builds a network for `graph` with every weight drawn from `seed`.
/// `alpha` starts as all ones.
pub fn build_supernet(cfg: &SearchSpaceConfig, graph: &Graph, seed: u64) -> Result<Supernet> {
    cfg.validate(graph.num_classes())?;
    let mut rng = crate::rng_from_seed(seed);
    let h = cfg.hidden_dim;
    let input_proj = orthogonal(graph.feature_dim(), h, &mut rng);
    let mut layer_weights = Vec::with_capacity(cfg.num_layers);
    let mut operator_params = Vec::with_capacity(cfg.num_layers);
    for _ in 0..cfg.num_layers {
        layer_weights.push(init_matrix(h, h, cfg.init_scheme, &mut rng));
        operator_params.push(
            cfg.operators
                .iter()
                .map(|&k| init_operator_params(k, h, cfg.init_scheme, &mut rng))
                .collect(),
        );
    }
    let output_weights = init_matrix(h, graph.num_classes(), cfg.init_scheme, &mut rng);
    Ok(Supernet {
        alpha: Matrix::ones(cfg.num_layers, cfg.num_operators()),
        config: cfg.clone(),
        input_proj,
        layer_weights,
        operator_params,
        output_weights,
        features: Arc::new(SparseMatrix::from_dense(graph.features())),
        ctx: GraphContext::new(graph)?,
    })
}

impl Supernet {
    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn num_operators(&self) -> usize {
        self.config.num_operators()
    }

    pub fn num_classes(&self) -> usize {
        self.output_weights.cols()
    }

    pub fn context(&self) -> &GraphContext {
        &self.ctx
    }

    /// Parameter count of everything except `alpha`.
    pub fn weight_count(&self) -> usize {
        self.input_proj.len()
            + self.layer_weights.iter().map(Matrix::len).sum::<usize>()
            + self
                .operator_params
                .iter()
                .flatten()
                .map(OperatorParams::num_parameters)
                .sum::<usize>()
            + self.output_weights.len()
    }

    /// FNV-1a over the bit patterns of every non-`alpha` weight.
    pub fn fixed_weight_hash(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |m: &Matrix| {
            for v in m.data() {
                for b in v.to_bits().to_le_bytes() {
                    hash ^= u64::from(b);
                    hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        };
        eat(&self.input_proj);
        for (w, ops) in self.layer_weights.iter().zip(&self.operator_params) {
            eat(w);
            for p in ops {
                p.tensors.iter().for_each(&mut eat);
            }
        }
        eat(&self.output_weights);
        hash
    }

    pub fn register(&self, tape: &mut Tape, trainable: Trainable) -> NetVars {
        let alpha = tape.leaf(self.alpha.clone(), trainable.alpha);
        let input_proj = tape.leaf(self.input_proj.clone(), trainable.weights);
        let layer_weights = self
            .layer_weights
            .iter()
            .map(|w| tape.leaf(w.clone(), trainable.weights))
            .collect();
        let op_params = self
            .operator_params
            .iter()
            .map(|ops| ops.iter().map(|p| p.register(tape, trainable.weights)).collect())
            .collect();
        let output = tape.leaf(self.output_weights.clone(), trainable.output);
        NetVars {
            alpha,
            input_proj,
            layer_weights,
            op_params,
            output,
        }
    }

    /// Projected input `X P`.
    pub fn input(&self, tape: &mut Tape, vars: &NetVars) -> Result<Var> {
        tape.spmm(&self.features, vars.input_proj)
    }

    /// Outputs of every layer-1 operator. They stay constant while the
    /// weights are frozen, so a search can compute them once.
    pub fn first_layer_outputs(&self) -> Result<Vec<Matrix>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, Trainable::default());
        let x = self.input(&mut tape, &vars)?;
        let mut out = Vec::with_capacity(self.num_operators());
        for (k, &kind) in self.config.operators.iter().enumerate() {
            let o = apply_operator(&mut tape, kind, &vars.op_params[0][k], &self.ctx, x)?;
            out.push(tape.value(o).clone());
        }
        Ok(out)
    }

    /// Mixes precomputed operator outputs of layer `l` and applies `W_l` and φ.
    fn mix(&self, tape: &mut Tape, vars: &NetVars, l: usize, outs: &[Var]) -> Result<Var> {
        let row = tape.select_row(vars.alpha, l)?;
        let coeffs = tape.l2_normalize(row)?;
        let mixed = tape.weighted_sum(coeffs, outs)?;
        let z = tape.matmul(mixed, vars.layer_weights[l])?;
        Ok(self.config.activation.apply(tape, z))
    }

    /// One mixed layer applied to `h` (N×hidden).
    pub fn mixed_layer_forward(&self, tape: &mut Tape, vars: &NetVars, l: usize, h: Var) -> Result<Var> {
        if l >= self.num_layers() {
            return Err(Error::IndexOutOfRange {
                what: "layer",
                index: l,
                limit: self.num_layers(),
            });
        }
        let outs = self
            .config
            .operators
            .iter()
            .enumerate()
            .map(|(k, &kind)| apply_operator(tape, kind, &vars.op_params[l][k], &self.ctx, h))
            .collect::<Result<Vec<_>>>()?;
        self.mix(tape, vars, l, &outs)
    }

    /// Full forward pass to N×C logits. When `first_layer` is given it
    /// replaces the layer-1 operator outputs; only valid while the
    /// input projection and layer-1 operator weights are frozen.
    pub fn forward(&self, tape: &mut Tape, vars: &NetVars, first_layer: Option<&[Matrix]>) -> Result<Var> {
        let mut h = match first_layer {
            Some(cache) => {
                if cache.len() != self.num_operators() {
                    return Err(Error::ConfigMismatch(format!(
                        "{} cached operator outputs for {} operators",
                        cache.len(),
                        self.num_operators()
                    )));
                }
                let outs: Vec<Var> = cache.iter().map(|m| tape.constant(m.clone())).collect();
                self.mix(tape, vars, 0, &outs)?
            }
            None => {
                let x = self.input(tape, vars)?;
                self.mixed_layer_forward(tape, vars, 0, x)?
            }
        };
        for l in 1..self.num_layers() {
            h = self.mixed_layer_forward(tape, vars, l, h)?;
        }
        tape.matmul(h, vars.output)
    }

    /// Logits of the current network, without gradients.
    pub fn logits(&self) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, Trainable::default());
        let out = self.forward(&mut tape, &vars, None)?;
        Ok(tape.value(out).clone())
    }

    /// Logits of the network that uses only operator `arch[l]` at layer `l`,
    /// with the current weights and no mixing.
    pub fn single_path_logits(&self, arch: &[usize], first_layer: Option<&[Matrix]>) -> Result<Matrix> {
        if arch.len() != self.num_layers() {
            return Err(Error::ConfigMismatch(format!(
                "architecture has {} layers, network has {}",
                arch.len(),
                self.num_layers()
            )));
        }
        if let Some(&k) = arch.iter().find(|&&k| k >= self.num_operators()) {
            return Err(Error::IndexOutOfRange {
                what: "operator",
                index: k,
                limit: self.num_operators(),
            });
        }
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, Trainable::default());
        let mut h = None;
        for (l, &k) in arch.iter().enumerate() {
            let o = match (l, first_layer) {
                (0, Some(cache)) => tape.constant(cache[k].clone()),
                _ => {
                    let input = match h {
                        Some(v) => v,
                        None => self.input(&mut tape, &vars)?,
                    };
                    apply_operator(&mut tape, self.config.operators[k], &vars.op_params[l][k], &self.ctx, input)?
                }
            };
            let z = tape.matmul(o, vars.layer_weights[l])?;
            h = Some(self.config.activation.apply(&mut tape, z));
        }
        let out = tape.matmul(h.expect("at least one layer"), vars.output)?;
        Ok(tape.value(out).clone())
    }
}

/// Logits of `net` for the given graph. The graph must be the one the
/// network was built for.
pub fn supernet_forward(net: &Supernet, graph: &Graph) -> Result<Matrix> {
    if graph.num_nodes() != net.ctx.num_nodes() || graph.feature_dim() != net.input_proj.rows() {
        return Err(Error::ConfigMismatch("graph does not match the network".into()));
    }
    net.logits()
}

/// The searched architecture: one operator per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSelection {
    pub indices: Vec<usize>,
    pub operators: Vec<OperatorKind>,
    pub alpha: Matrix,
}

impl ArchitectureSelection {
    /// A selection that did not come out of a search; `alpha` is one-hot.
    pub fn from_operators(ops: &[OperatorKind]) -> Self {
        let mut space: Vec<OperatorKind> = Vec::new();
        let mut indices = Vec::with_capacity(ops.len());
        for op in ops {
            let k = match space.iter().position(|s| s == op) {
                Some(k) => k,
                None => {
                    space.push(*op);
                    space.len() - 1
                }
            };
            indices.push(k);
        }
        let alpha = one_hot_alpha(&indices, space.len());
        Self {
            indices,
            operators: ops.to_vec(),
            alpha,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.operators.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.operators.iter().map(|o| o.name()).collect()
    }
}

impl fmt::Display for ArchitectureSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, op) in self.operators.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{op}")?;
        }
        f.write_str("]")
    }
}

/// Per-row argmax of `|alpha|`, ties to the lowest index.
pub fn argmax_abs(alpha: &Matrix) -> Vec<usize> {
    (0..alpha.rows())
        .map(|r| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (k, v) in alpha.row(r).iter().enumerate() {
                if v.abs() > best_v {
                    best = k;
                    best_v = v.abs();
                }
            }
            best
        })
        .collect()
}

pub fn derive_architecture(net: &Supernet) -> ArchitectureSelection {
    let indices = argmax_abs(&net.alpha);
    ArchitectureSelection {
        operators: indices.iter().map(|&k| net.config.operators[k]).collect(),
        indices,
        alpha: net.alpha.clone(),
    }
}

pub fn one_hot_alpha(indices: &[usize], k: usize) -> Matrix {
    Matrix::from_fn(indices.len(), k, |l, j| if indices[l] == j { 1.0 } else { 0.0 })
}
