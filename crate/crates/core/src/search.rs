//! The coefficient search. Each epoch is one full-batch step on the training
//! nodes: cross-entropy through the tape plus `ρ · sign(α)` for the L1 term,
//! followed by an Adam step on `α`. The `nac_plus` and `nac_updating` modes
//! add an SGD step on the output layer or on every weight.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::optim::{cosine_lr, Adam, AdamConfig, Sgd, SgdConfig};
use crate::supernet::{build_supernet, derive_architecture, ArchitectureSelection, NetVars, SearchSpaceConfig, Supernet, Trainable};
use crate::tensor::{Gradients, Matrix, Tape, Var};
use crate::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SearchMode {
    /// Only `α` is updated.
    #[default]
    Nac,
    /// `α` and the output layer, alternating.
    NacPlus,
    /// `α` and every weight, alternating.
    NacUpdating,
}

impl SearchMode {
    pub const ALL: [SearchMode; 3] = [Self::Nac, Self::NacPlus, Self::NacUpdating];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nac => "nac",
            Self::NacPlus => "nac-plus",
            Self::NacUpdating => "nac-updating",
        }
    }

    fn trains_weights(self) -> bool {
        self == Self::NacUpdating
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "nac" => Ok(Self::Nac),
            "nac-plus" => Ok(Self::NacPlus),
            "nac-updating" => Ok(Self::NacUpdating),
            other => Err(format!("unknown search mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub space: SearchSpaceConfig,
    pub mode: SearchMode,
    pub epochs: usize,
    pub rho: f64,
    pub arch_optimizer: AdamConfig,
    pub weight_optimizer: SgdConfig,
    pub seed: u64,
    /// Record validation accuracy of the current argmax architecture each epoch.
    pub track_validation: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            space: SearchSpaceConfig::default(),
            mode: SearchMode::Nac,
            epochs: 100,
            rho: 1e-3,
            arch_optimizer: AdamConfig::ARCH,
            weight_optimizer: SgdConfig::WEIGHTS,
            seed: 0,
            track_validation: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be a finite value >= 0, got {}", self.rho)));
        }
        Ok(())
    }
}

/// `sign(α)` elementwise with `sign(0) = 0`.
pub fn l1_subgradient(alpha: &Matrix) -> Matrix {
    alpha.map(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn l1_norm(alpha: &Matrix) -> f64 {
    alpha.data().iter().map(|v| v.abs()).sum()
}

/// Number of parameters a search in `mode` changes at every epoch.
pub fn updated_parameter_count(mode: SearchMode, net: &Supernet) -> usize {
    let alpha = net.alpha.len();
    match mode {
        SearchMode::Nac => alpha,
        SearchMode::NacPlus => alpha + net.output_weights.len(),
        SearchMode::NacUpdating => alpha + net.weight_count(),
    }
}

/// One evaluation of the objective, with the tape ready for `backward`.
pub struct Objective {
    pub tape: Tape,
    pub vars: NetVars,
    /// The cross-entropy node; the L1 term is not on the tape.
    pub ce_var: Var,
    pub ce: f64,
    pub l1: f64,
    pub rho: f64,
}

impl Objective {
    pub fn value(&self) -> f64 {
        self.ce + self.rho * self.l1
    }
}

/// Cross-entropy on the training nodes plus `ρ‖α‖₁`.
pub fn nac_objective(
    net: &Supernet,
    graph: &Graph,
    split: &Split,
    rho: f64,
    trainable: Trainable,
    first_layer: Option<&[Matrix]>,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let vars = net.register(&mut tape, trainable);
    let logits = net.forward(&mut tape, &vars, first_layer)?;
    let ce_var = tape.cross_entropy(logits, graph.labels(), split.train())?;
    let ce = tape.scalar(ce_var);
    Ok(Objective {
        tape,
        vars,
        ce_var,
        ce,
        l1: l1_norm(&net.alpha),
        rho,
    })
}

/// Gradient of the objective with respect to `α`: tape gradient of the
/// cross-entropy plus `ρ · sign(α)`.
pub fn alpha_gradient(net: &Supernet, obj: Objective) -> Result<(f64, f64, Matrix)> {
    let Objective {
        mut tape,
        vars,
        ce_var,
        ce,
        l1,
        rho,
    } = obj;
    let mut grads = tape.backward(ce_var)?;
    let mut g = grads.take(vars.alpha).expect("alpha is trainable");
    g.axpy(rho, &l1_subgradient(&net.alpha))?;
    Ok((ce, l1, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub ce: f64,
    pub l1: f64,
    pub ms: f64,
    pub updated_params: usize,
    /// Coefficients after this epoch's update.
    pub alpha: Matrix,
    /// Validation accuracy of the argmax architecture after the update.
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub mode: SearchMode,
    pub records: Vec<EpochRecord>,
}

impl SearchTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_ms(&self) -> f64 {
        self.records.iter().map(|r| r.ms).sum()
    }

    pub fn mean_epoch_ms(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.total_ms() / self.records.len() as f64
        }
    }

    /// First epoch `e` (1-based) such that the tracked validation accuracy
    /// stays within `tol` over epochs `e .. e + window`. Returns the trace
    /// length when no such window exists or nothing was tracked.
    pub fn stabilization_epoch(&self, window: usize, tol: f64) -> usize {
        let acc: Vec<f64> = self.records.iter().filter_map(|r| r.val_acc).collect();
        if acc.len() != self.records.len() || window == 0 {
            return self.records.len();
        }
        for start in 0..acc.len().saturating_sub(window - 1) {
            let w = &acc[start..start + window];
            let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
            if hi - lo < tol {
                return self.records[start].epoch;
            }
        }
        self.records.len()
    }
}

pub struct SearchOutcome {
    pub selection: ArchitectureSelection,
    pub trace: SearchTrace,
    pub network: Supernet,
    /// Hash of the non-`α` weights right after the network was built.
    pub initial_weight_hash: u64,
}

/// Fraction of `nodes` whose row argmax equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let pred = logits.argmax_rows();
    nodes.iter().filter(|&&i| pred[i] == labels[i]).count() as f64 / nodes.len() as f64
}

fn weight_params(net: &mut Supernet) -> Vec<&mut Matrix> {
    let mut out: Vec<&mut Matrix> = Vec::new();
    out.push(&mut net.input_proj);
    for (w, ops) in net.layer_weights.iter_mut().zip(net.operator_params.iter_mut()) {
        out.push(w);
        for p in ops.iter_mut() {
            out.extend(p.tensors.iter_mut());
        }
    }
    out.push(&mut net.output_weights);
    out
}

fn weight_vars(vars: &NetVars) -> Vec<Var> {
    let mut out = Vec::new();
    out.push(vars.input_proj);
    for (w, ops) in vars.layer_weights.iter().zip(&vars.op_params) {
        out.push(*w);
        for p in ops {
            out.extend(p.iter().copied());
        }
    }
    out.push(vars.output);
    out
}

fn collect(grads: &mut Gradients, vars: &[Var]) -> Vec<Matrix> {
    vars.iter().map(|&v| grads.take(v).expect("trainable leaf")).collect()
}

/// Runs the search and returns the argmax architecture with its trace.
pub fn search(cfg: &SearchConfig, graph: &Graph, split: &Split, clock: &dyn Clock) -> Result<SearchOutcome> {
    cfg.validate()?;
    let mut net = build_supernet(&cfg.space, graph, cfg.seed)?;
    let initial_weight_hash = net.fixed_weight_hash();
    let mode = cfg.mode;
    let updated = updated_parameter_count(mode, &net);
    let cache = if mode.trains_weights() {
        None
    } else {
        Some(net.first_layer_outputs()?)
    };

    let mut arch_opt = Adam::new(cfg.arch_optimizer, &[net.alpha.shape()]);
    let mut weight_opt = match mode {
        SearchMode::Nac => None,
        SearchMode::NacPlus => Some(Sgd::new(cfg.weight_optimizer, &[net.output_weights.shape()])),
        SearchMode::NacUpdating => {
            let shapes: Vec<_> = weight_params(&mut net).iter().map(|m| m.shape()).collect();
            Some(Sgd::new(cfg.weight_optimizer, &shapes))
        }
    };

    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = clock.now_ms();
        let only_alpha = Trainable {
            alpha: true,
            ..Trainable::default()
        };
        let obj = nac_objective(&net, graph, split, cfg.rho, only_alpha, cache.as_deref())?;
        let loss = obj.value();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let (ce, l1, g_alpha) = alpha_gradient(&net, obj)?;
        arch_opt.step(&mut [&mut net.alpha], &[&g_alpha], cfg.arch_optimizer.lr)?;

        if let Some(opt) = weight_opt.as_mut() {
            let lr = cosine_lr(cfg.weight_optimizer.lr, 0.0, epoch - 1, cfg.epochs);
            let trainable = Trainable {
                alpha: false,
                output: true,
                weights: mode.trains_weights(),
            };
            let mut obj = nac_objective(&net, graph, split, cfg.rho, trainable, cache.as_deref())?;
            if !obj.ce.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let mut grads = obj.tape.backward(obj.ce_var)?;
            if mode.trains_weights() {
                let gs = collect(&mut grads, &weight_vars(&obj.vars));
                let grefs: Vec<&Matrix> = gs.iter().collect();
                opt.step(&mut weight_params(&mut net), &grefs, lr)?;
            } else {
                let g = grads.take(obj.vars.output).expect("output is trainable");
                opt.step(&mut [&mut net.output_weights], &[&g], lr)?;
            }
        }

        let val_acc = if cfg.track_validation {
            let arch = derive_architecture(&net);
            let logits = net.single_path_logits(&arch.indices, cache.as_deref())?;
            Some(accuracy(&logits, graph.labels(), split.val()))
        } else {
            None
        };
        records.push(EpochRecord {
            epoch,
            loss,
            ce,
            l1,
            ms: clock.now_ms() - start,
            updated_params: updated,
            alpha: net.alpha.clone(),
            val_acc,
        });
    }

    Ok(SearchOutcome {
        selection: derive_architecture(&net),
        trace: SearchTrace { mode, records },
        network: net,
        initial_weight_hash,
    })
}
