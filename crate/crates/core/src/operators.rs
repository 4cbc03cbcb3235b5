//! Candidate node aggregators. Every operator maps an N×h embedding to an
//! N×h embedding using its own frozen (or, when retraining, trainable)
//! parameters.
//!
//! | name         | output                                                      |
//! |--------------|-------------------------------------------------------------|
//! | `mlp`        | `H W`                                                       |
//! | `gcn`        | `Â H W`                                                     |
//! | `gat`        | attention over `A+I`, `e_ij = LeakyReLU₀.₂(a_sᵀh_i + a_dᵀh_j)` |
//! | `gat_linear` | attention with `e_ij = a_dᵀh_j`                             |
//! | `gat_cos`    | attention with `e_ij = cos(W h_i, W h_j)`                   |
//! | `gin`        | `ReLU(((1+ε)H + A H) W₁) W₂`                                |
//! | `sage_mean`  | `[H ‖ mean_N(H)] W`                                         |
//! | `sage_max`   | `[H ‖ max_N(H)] W`                                          |
//! | `cheb`       | `Σ_c T_c(L̂) H W_c`, Chebyshev order 2 by default           |
//! | `geniepath`  | `tanh(H W_g) ⊙ gat(H)`, breadth component only              |
//!
//! Attention aggregates `H W` rather than aggregating `H` and then applying
//! `W`; the two are equal because the aggregation is linear in its input.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{self, Graph, PropagationMatrix};
use crate::init::{init_matrix, InitScheme};
use crate::tensor::{Matrix, SparseMatrix, Tape, Var};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const DEFAULT_CHEB_ORDER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperatorKind {
    Mlp,
    Gcn,
    GatStd,
    GatLinear,
    GatCos,
    Gin,
    SageMean,
    SageMax,
    Cheb { order: usize },
    GeniePath,
}

impl OperatorKind {
    /// Every operator in the zoo.
    pub const ALL: [OperatorKind; 10] = [
        Self::Mlp,
        Self::Gcn,
        Self::GatStd,
        Self::GatLinear,
        Self::GatCos,
        Self::Gin,
        Self::SageMean,
        Self::SageMax,
        Self::Cheb {
            order: DEFAULT_CHEB_ORDER,
        },
        Self::GeniePath,
    ];

    /// The default seven-aggregator search space.
    pub const DEFAULT_SEARCH_SPACE: [OperatorKind; 7] = [
        Self::Mlp,
        Self::Gcn,
        Self::GatStd,
        Self::Gin,
        Self::GeniePath,
        Self::SageMean,
        Self::Cheb {
            order: DEFAULT_CHEB_ORDER,
        },
    ];

    pub fn name(self) -> String {
        match self {
            Self::Mlp => "mlp".into(),
            Self::Gcn => "gcn".into(),
            Self::GatStd => "gat".into(),
            Self::GatLinear => "gat_linear".into(),
            Self::GatCos => "gat_cos".into(),
            Self::Gin => "gin".into(),
            Self::SageMean => "sage_mean".into(),
            Self::SageMax => "sage_max".into(),
            Self::Cheb { order } if order == DEFAULT_CHEB_ORDER => "cheb".into(),
            Self::Cheb { order } => format!("cheb{order}"),
            Self::GeniePath => "geniepath".into(),
        }
    }

    /// Parses a comma-separated operator list.
    pub fn parse_list(s: &str) -> Result<Vec<OperatorKind>, String> {
        let ops: Vec<OperatorKind> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        if ops.is_empty() {
            return Err("empty operator list".into());
        }
        Ok(ops)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match s.as_str() {
            "mlp" => Self::Mlp,
            "gcn" => Self::Gcn,
            "gat" => Self::GatStd,
            "gat_linear" => Self::GatLinear,
            "gat_cos" => Self::GatCos,
            "gin" => Self::Gin,
            "sage_mean" | "sage" => Self::SageMean,
            "sage_max" => Self::SageMax,
            "cheb" => Self::Cheb {
                order: DEFAULT_CHEB_ORDER,
            },
            "geniepath" => Self::GeniePath,
            other => match other.strip_prefix("cheb").and_then(|k| k.parse::<usize>().ok()) {
                Some(order) if order >= 1 => Self::Cheb { order },
                _ => return Err(format!("unknown operator '{other}'")),
            },
        })
    }
}

/// Graph-derived matrices shared by all operators on one graph.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub gcn: PropagationMatrix,
    pub cheb: PropagationMatrix,
    pub mean: PropagationMatrix,
    pub self_loop: PropagationMatrix,
    pub adjacency: Arc<SparseMatrix>,
}

impl GraphContext {
    pub fn new(g: &Graph) -> Result<Self> {
        Ok(Self {
            gcn: graph::gcn_renormalize(g),
            cheb: graph::cheb_scaled_laplacian(g, 2.0)?,
            mean: graph::mean_neighbor(g),
            self_loop: graph::raw_self_loop(g),
            adjacency: Arc::new(g.adjacency()),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }
}

/// Parameter tensors of one operator instance, in the per-kind order
/// documented on [`OperatorParams::shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorParams {
    pub kind: OperatorKind,
    pub tensors: Vec<Matrix>,
}

impl OperatorParams {
    /// Shapes of the parameter tensors for `kind` at hidden size `h`:
    /// - mlp, gcn, gat_cos: `[W]`
    /// - gat: `[W, a_src, a_dst]`; gat_linear: `[W, a_dst]`
    /// - gin: `[ε (1×1), W₁, W₂]`
    /// - sage_*: `[W (2h×h)]`
    /// - cheb: `[W₀, …, W_order]`
    /// - geniepath: `[W, a_src, a_dst, W_gate]`
    pub fn shapes(kind: OperatorKind, h: usize) -> Vec<(usize, usize)> {
        match kind {
            OperatorKind::Mlp | OperatorKind::Gcn | OperatorKind::GatCos => vec![(h, h)],
            OperatorKind::GatStd => vec![(h, h), (h, 1), (h, 1)],
            OperatorKind::GatLinear => vec![(h, h), (h, 1)],
            OperatorKind::Gin => vec![(1, 1), (h, h), (h, h)],
            OperatorKind::SageMean | OperatorKind::SageMax => vec![(2 * h, h)],
            OperatorKind::Cheb { order } => vec![(h, h); order + 1],
            OperatorKind::GeniePath => vec![(h, h), (h, 1), (h, 1), (h, h)],
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Puts the tensors on `tape` as trainable or constant leaves.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|m| tape.leaf(m.clone(), trainable)).collect()
    }
}

/// Draws fresh parameters for `kind`. GIN's ε starts at 0.
pub fn init_operator_params(kind: OperatorKind, hidden: usize, scheme: InitScheme, rng: &mut crate::Rng) -> OperatorParams {
    let mut tensors = Vec::new();
    for (i, (r, c)) in OperatorParams::shapes(kind, hidden).into_iter().enumerate() {
        if kind == OperatorKind::Gin && i == 0 {
            tensors.push(Matrix::zeros(1, 1));
        } else {
            tensors.push(init_matrix(r, c, scheme, rng));
        }
    }
    OperatorParams { kind, tensors }
}

fn attention(
    tape: &mut Tape,
    ctx: &GraphContext,
    h: Var,
    hw: Var,
    src: Option<Var>,
    dst: Option<Var>,
) -> Result<Var> {
    let pattern = &ctx.self_loop.matrix;
    let s = src.map(|a| tape.matmul(h, a)).transpose()?;
    let d = dst.map(|a| tape.matmul(h, a)).transpose()?;
    let e = tape.edge_scores(pattern, s, d)?;
    let e = if src.is_some() { tape.leaky_relu(e, LEAKY_SLOPE) } else { e };
    let w = tape.edge_softmax(pattern, e)?;
    tape.edge_aggregate(pattern, w, hw)
}

/// Applies one operator to `h` (N×hidden) with parameters already on the tape.
pub fn apply_operator(tape: &mut Tape, kind: OperatorKind, params: &[Var], ctx: &GraphContext, h: Var) -> Result<Var> {
    let (n, _) = tape.value(h).shape();
    if n != ctx.num_nodes() {
        return Err(Error::Shape {
            op: "apply_operator",
            lhs: (ctx.num_nodes(), ctx.num_nodes()),
            rhs: tape.value(h).shape(),
        });
    }
    let expected = match kind {
        OperatorKind::Cheb { order } => order + 1,
        OperatorKind::Mlp | OperatorKind::Gcn | OperatorKind::GatCos => 1,
        OperatorKind::GatStd | OperatorKind::Gin => 3,
        OperatorKind::GatLinear => 2,
        OperatorKind::SageMean | OperatorKind::SageMax => 1,
        OperatorKind::GeniePath => 4,
    };
    if params.len() != expected {
        return Err(Error::InvalidParameter(format!(
            "{kind} expects {expected} parameter tensors, got {}",
            params.len()
        )));
    }
    match kind {
        OperatorKind::Mlp => tape.matmul(h, params[0]),
        OperatorKind::Gcn => {
            let hw = tape.matmul(h, params[0])?;
            tape.spmm(&ctx.gcn.matrix, hw)
        }
        OperatorKind::GatStd => {
            let hw = tape.matmul(h, params[0])?;
            attention(tape, ctx, h, hw, Some(params[1]), Some(params[2]))
        }
        OperatorKind::GatLinear => {
            let hw = tape.matmul(h, params[0])?;
            attention(tape, ctx, h, hw, None, Some(params[1]))
        }
        OperatorKind::GatCos => {
            let pattern = &ctx.self_loop.matrix;
            let hw = tape.matmul(h, params[0])?;
            let unit = tape.row_normalize(hw, 1e-12);
            let e = tape.edge_dot(pattern, unit, unit)?;
            let w = tape.edge_softmax(pattern, e)?;
            tape.edge_aggregate(pattern, w, hw)
        }
        OperatorKind::Gin => {
            let one = tape.constant(Matrix::ones(1, 1));
            let scale = tape.add(one, params[0])?;
            let own = tape.weighted_sum(scale, &[h])?;
            let neigh = tape.spmm(&ctx.adjacency, h)?;
            let z = tape.add(own, neigh)?;
            let z = tape.matmul(z, params[1])?;
            let z = tape.relu(z);
            tape.matmul(z, params[2])
        }
        OperatorKind::SageMean => {
            let agg = tape.spmm(&ctx.mean.matrix, h)?;
            let cat = tape.concat_cols(h, agg)?;
            tape.matmul(cat, params[0])
        }
        OperatorKind::SageMax => {
            let agg = tape.neighbor_max(&ctx.adjacency, h)?;
            let cat = tape.concat_cols(h, agg)?;
            tape.matmul(cat, params[0])
        }
        OperatorKind::Cheb { order } => {
            let lhat = &ctx.cheb.matrix;
            let mut out = tape.matmul(h, params[0])?;
            let mut prev = h;
            let mut cur = tape.spmm(lhat, h)?;
            for (c, &w) in params.iter().enumerate().take(order + 1).skip(1) {
                if c >= 2 {
                    let lt = tape.spmm(lhat, cur)?;
                    let lt2 = tape.scale(lt, 2.0);
                    let next = tape.sub(lt2, prev)?;
                    prev = cur;
                    cur = next;
                }
                let term = tape.matmul(cur, w)?;
                out = tape.add(out, term)?;
            }
            Ok(out)
        }
        OperatorKind::GeniePath => {
            let hw = tape.matmul(h, params[0])?;
            let att = attention(tape, ctx, h, hw, Some(params[1]), Some(params[2]))?;
            let gate = tape.matmul(h, params[3])?;
            let gate = tape.tanh(gate);
            tape.mul(gate, att)
        }
    }
}
