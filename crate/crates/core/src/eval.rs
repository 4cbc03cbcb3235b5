//! Retraining of searched architectures, the random-search baseline and
//! search timing summaries.
//!
//! A retrained model is `Linear(F→h)` followed by one single-operator layer
//! per selected operator (with bias, activation and input dropout) and a
//! linear classifier. Training is full-batch Adam with cosine decay; the
//! parameters of the best validation epoch (ties to the earlier epoch) are
//! kept and scored once on the test nodes.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng as _, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::init::{fan_in_uniform, InitScheme};
use crate::operators::{apply_operator, init_operator_params, GraphContext, OperatorKind, OperatorParams};
use crate::optim::{cosine_lr, Adam, AdamConfig};
use crate::search::{accuracy, SearchMode, SearchTrace};
use crate::supernet::{Activation, ArchitectureSelection};
use crate::tensor::{Matrix, SparseMatrix, Tape, Var};
use crate::Clock;

/// Window and tolerance used to decide when a search has settled.
pub const STABILIZATION_WINDOW: usize = 10;
pub const STABILIZATION_TOL: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub seeds: usize,
    pub init: InitScheme,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self::for_dataset("cora")
    }
}

impl RetrainConfig {
    /// Tuned defaults per dataset. Unknown names get the Cora settings.
    pub fn for_dataset(name: &str) -> Self {
        let base = Self {
            epochs: 400,
            lr: 0.0004150,
            weight_decay: 0.0001125,
            hidden: 256,
            dropout: 0.6,
            activation: Activation::Relu,
            seeds: 4,
            init: InitScheme::Orthogonal,
        };
        let name = name.to_ascii_lowercase();
        let key = name.split(|c: char| !c.is_ascii_alphanumeric()).next().unwrap_or("");
        match key {
            "citeseer" => Self {
                lr: 0.005937,
                weight_decay: 0.00002007,
                hidden: 512,
                dropout: 0.5,
                ..base
            },
            "pubmed" => Self {
                lr: 0.002408,
                weight_decay: 0.00008850,
                hidden: 64,
                dropout: 0.5,
                ..base
            },
            "amazon" | "computers" => Self {
                lr: 0.002111,
                weight_decay: 0.000331,
                hidden: 64,
                dropout: 0.5,
                activation: Activation::Elu,
                ..base
            },
            "ppi" => Self {
                lr: 0.00102,
                weight_decay: 0.0,
                hidden: 512,
                dropout: 0.5,
                ..base
            },
            _ => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.hidden == 0 || self.seeds == 0 {
            return Err(Error::InvalidParameter("hidden and seeds must be positive".into()));
        }
        if !(self.lr > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("lr must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Test accuracy of the best-validation parameters.
    pub accuracy: f64,
    pub val_accuracy: f64,
    /// Reserved for multi-label data.
    pub micro_f1: Option<f64>,
    pub seconds: f64,
    /// 0 means the untrained initialization was kept.
    pub best_epoch: usize,
    pub seed: u64,
}

struct Model {
    input_w: Matrix,
    input_b: Matrix,
    layers: Vec<(OperatorParams, Matrix)>,
    out_w: Matrix,
    out_b: Matrix,
}

struct ModelVars {
    input_w: Var,
    input_b: Var,
    layers: Vec<(Vec<Var>, Var)>,
    out_w: Var,
    out_b: Var,
}

impl Model {
    fn new(ops: &[OperatorKind], features: usize, classes: usize, cfg: &RetrainConfig, seed: u64) -> Self {
        let mut rng = crate::rng_from_seed(seed);
        let h = cfg.hidden;
        let input_w = fan_in_uniform(features, h, &mut rng);
        let layers = ops
            .iter()
            .map(|&k| (init_operator_params(k, h, cfg.init, &mut rng), Matrix::zeros(1, h)))
            .collect();
        let out_w = fan_in_uniform(h, classes, &mut rng);
        Self {
            input_w,
            input_b: Matrix::zeros(1, h),
            layers,
            out_w,
            out_b: Matrix::zeros(1, classes),
        }
    }

    fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        out.push(&self.input_w);
        out.push(&self.input_b);
        for (p, b) in &self.layers {
            out.extend(p.tensors.iter());
            out.push(b);
        }
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.push(&mut self.input_w);
        out.push(&mut self.input_b);
        for (p, b) in self.layers.iter_mut() {
            out.extend(p.tensors.iter_mut());
            out.push(b);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    fn register(&self, tape: &mut Tape, trainable: bool) -> ModelVars {
        ModelVars {
            input_w: tape.leaf(self.input_w.clone(), trainable),
            input_b: tape.leaf(self.input_b.clone(), trainable),
            layers: self
                .layers
                .iter()
                .map(|(p, b)| (p.register(tape, trainable), tape.leaf(b.clone(), trainable)))
                .collect(),
            out_w: tape.leaf(self.out_w.clone(), trainable),
            out_b: tape.leaf(self.out_b.clone(), trainable),
        }
    }
}

impl ModelVars {
    fn flat(&self) -> Vec<Var> {
        let mut out = Vec::new();
        out.push(self.input_w);
        out.push(self.input_b);
        for (p, b) in &self.layers {
            out.extend(p.iter().copied());
            out.push(*b);
        }
        out.push(self.out_w);
        out.push(self.out_b);
        out
    }
}

struct Data {
    features: Arc<SparseMatrix>,
    ctx: GraphContext,
}

/// Dropout draws are plentiful, so they come from a fast stream and each
/// 64-bit output is split into four 16-bit uniforms.
struct MaskRng {
    rng: Xoshiro256PlusPlus,
    bits: u64,
    left: u32,
}

impl MaskRng {
    fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            bits: 0,
            left: 0,
        }
    }

    /// `p` rounded to a multiple of 2⁻¹⁶.
    fn threshold(p: f64) -> u32 {
        libm::round(p * 65536.0) as u32
    }

    fn dropped(&mut self, threshold: u32) -> bool {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 4;
        }
        let u = (self.bits & 0xffff) as u32;
        self.bits >>= 16;
        self.left -= 1;
        u < threshold
    }
}

fn dropout_mask(tape: &mut Tape, x: Var, p: f64, rng: &mut MaskRng) -> Result<Var> {
    let (r, c) = tape.value(x).shape();
    let keep = 1.0 / (1.0 - p);
    let t = MaskRng::threshold(p);
    let mask = Matrix::from_fn(r, c, |_, _| if rng.dropped(t) { 0.0 } else { keep });
    let m = tape.constant(mask);
    tape.mul(x, m)
}

fn forward(
    model: &Model,
    vars: &ModelVars,
    tape: &mut Tape,
    data: &Data,
    cfg: &RetrainConfig,
    mut rng: Option<&mut MaskRng>,
) -> Result<Var> {
    let p = cfg.dropout;
    let features = match rng.as_deref_mut() {
        Some(r) if p > 0.0 => {
            let keep = 1.0 / (1.0 - p);
            let t = MaskRng::threshold(p);
            let vals = data
                .features
                .values()
                .iter()
                .map(|&v| if r.dropped(t) { 0.0 } else { v * keep })
                .collect();
            Arc::new(data.features.with_values(vals)?)
        }
        _ => data.features.clone(),
    };
    let h = tape.spmm(&features, vars.input_w)?;
    let mut h = tape.add_row(h, vars.input_b)?;
    for ((params, _), (pv, bv)) in model.layers.iter().zip(&vars.layers) {
        let input = match rng.as_deref_mut() {
            Some(r) if p > 0.0 => dropout_mask(tape, h, p, r)?,
            _ => h,
        };
        let z = apply_operator(tape, params.kind, pv, &data.ctx, input)?;
        let z = tape.add_row(z, *bv)?;
        h = cfg.activation.apply(tape, z);
    }
    let input = match rng.as_deref_mut() {
        Some(r) if p > 0.0 => dropout_mask(tape, h, p, r)?,
        _ => h,
    };
    let z = tape.matmul(input, vars.out_w)?;
    tape.add_row(z, vars.out_b)
}

fn eval_logits(model: &Model, data: &Data, cfg: &RetrainConfig) -> Result<Matrix> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let out = forward(model, &vars, &mut tape, data, cfg, None)?;
    Ok(tape.value(out).clone())
}

struct Fit {
    model: Model,
    val_accuracy: f64,
    best_epoch: usize,
}

/// Trains and returns the best-validation snapshot. Never touches test nodes.
fn fit(ops: &[OperatorKind], graph: &Graph, split: &Split, data: &Data, cfg: &RetrainConfig, seed: u64) -> Result<Fit> {
    let mut model = Model::new(ops, graph.feature_dim(), graph.num_classes(), cfg, seed);
    let mut rng = MaskRng::new(crate::rng_from_seed(seed).next_u64() ^ 0x9e37_79b9_7f4a_7c15);
    let shapes: Vec<_> = model.params().iter().map(|m| m.shape()).collect();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr, cfg.weight_decay), &shapes);

    let val_acc = |m: &Model| -> Result<f64> { Ok(accuracy(&eval_logits(m, data, cfg)?, graph.labels(), split.val())) };
    let mut best = Fit {
        val_accuracy: val_acc(&model)?,
        best_epoch: 0,
        model: Model {
            input_w: model.input_w.clone(),
            input_b: model.input_b.clone(),
            layers: model.layers.clone(),
            out_w: model.out_w.clone(),
            out_b: model.out_b.clone(),
        },
    };
    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let vars = model.register(&mut tape, true);
        let logits = forward(&model, &vars, &mut tape, data, cfg, Some(&mut rng))?;
        let loss = tape.cross_entropy(logits, graph.labels(), split.train())?;
        if !tape.scalar(loss).is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let mut grads = tape.backward(loss)?;
        let gs: Vec<Matrix> = vars.flat().iter().map(|&v| grads.take(v).expect("trainable")).collect();
        let grefs: Vec<&Matrix> = gs.iter().collect();
        let lr = cosine_lr(cfg.lr, 0.0, epoch - 1, cfg.epochs);
        adam.step(&mut model.params_mut(), &grefs, lr)?;

        let acc = val_acc(&model)?;
        if acc > best.val_accuracy {
            best.val_accuracy = acc;
            best.best_epoch = epoch;
            for (dst, src) in best.model.params_mut().into_iter().zip(model.params()) {
                dst.data_mut().copy_from_slice(src.data());
            }
        }
    }
    Ok(best)
}

fn prepare(graph: &Graph) -> Result<Data> {
    Ok(Data {
        features: Arc::new(SparseMatrix::from_dense(graph.features())),
        ctx: GraphContext::new(graph)?,
    })
}

fn check_arch(arch: &[OperatorKind], layers: Option<usize>) -> Result<()> {
    if arch.is_empty() {
        return Err(Error::InvalidParameter("architecture has no layers".into()));
    }
    if let Some(l) = layers {
        if l != arch.len() {
            return Err(Error::ConfigMismatch(format!("architecture has {} layers, expected {l}", arch.len())));
        }
    }
    Ok(())
}

/// Trains `arch` from scratch and reports test accuracy at the best
/// validation epoch. With `cfg.epochs == 0` the initialization is scored.
pub fn retrain(
    arch: &ArchitectureSelection,
    graph: &Graph,
    split: &Split,
    cfg: &RetrainConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<Metrics> {
    retrain_ops(&arch.operators, graph, split, cfg, seed, clock)
}

pub fn retrain_ops(
    ops: &[OperatorKind],
    graph: &Graph,
    split: &Split,
    cfg: &RetrainConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<Metrics> {
    cfg.validate()?;
    check_arch(ops, None)?;
    let start = clock.now_ms();
    let data = prepare(graph)?;
    let best = fit(ops, graph, split, &data, cfg, seed)?;
    let logits = eval_logits(&best.model, &data, cfg)?;
    let test = accuracy(&logits, graph.labels(), split.test());
    Ok(Metrics {
        accuracy: test,
        val_accuracy: best.val_accuracy,
        micro_f1: None,
        seconds: (clock.now_ms() - start) / 1000.0,
        best_epoch: best.best_epoch,
        seed,
    })
}

/// Mean, population standard deviation and maximum of test accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracySummary {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl AccuracySummary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: 0.0,
                std: 0.0,
                max: 0.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: libm::sqrt(var),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomSearchConfig {
    pub budget: usize,
    pub num_layers: usize,
    pub operators: Vec<OperatorKind>,
    /// Epochs for each candidate. `None` trains every candidate with the full
    /// retrain budget and reuses the winner's run.
    pub probe_epochs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RandomSearchOutcome {
    pub best: ArchitectureSelection,
    pub metrics: Metrics,
    /// Every sampled candidate with its best validation accuracy.
    pub candidates: Vec<(Vec<OperatorKind>, f64)>,
    pub retrains: usize,
}

fn sample_architectures(rs: &RandomSearchConfig, seed: u64) -> Vec<Vec<usize>> {
    let k = rs.operators.len();
    let total = (k as u128).checked_pow(rs.num_layers as u32).unwrap_or(u128::MAX);
    let mut rng = crate::rng_from_seed(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    if (rs.budget as u128) >= total {
        for code in 0..total as usize {
            let mut c = code;
            let arch: Vec<usize> = (0..rs.num_layers)
                .map(|_| {
                    let d = c % k;
                    c /= k;
                    d
                })
                .collect();
            out.push(arch);
        }
        return out;
    }
    while out.len() < rs.budget {
        let arch: Vec<usize> = (0..rs.num_layers).map(|_| rng.random_range(0..k)).collect();
        if seen.insert(arch.clone()) {
            out.push(arch);
        }
    }
    out
}

/// Samples distinct architectures uniformly, keeps the best by validation
/// accuracy and reports its fully retrained test accuracy.
pub fn random_search_baseline(
    graph: &Graph,
    split: &Split,
    rs: &RandomSearchConfig,
    cfg: &RetrainConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<RandomSearchOutcome> {
    if rs.budget == 0 || rs.operators.is_empty() || rs.num_layers == 0 {
        return Err(Error::InvalidParameter(
            "random search needs budget, operators and layers >= 1".into(),
        ));
    }
    cfg.validate()?;
    let start = clock.now_ms();
    let data = prepare(graph)?;
    let probe_cfg = RetrainConfig {
        epochs: rs.probe_epochs.unwrap_or(cfg.epochs),
        ..cfg.clone()
    };
    let mut candidates = Vec::new();
    let mut best: Option<(usize, Fit)> = None;
    for (i, idx) in sample_architectures(rs, seed).into_iter().enumerate() {
        let ops: Vec<OperatorKind> = idx.iter().map(|&k| rs.operators[k]).collect();
        let f = fit(&ops, graph, split, &data, &probe_cfg, seed)?;
        candidates.push((ops, f.val_accuracy));
        if best.as_ref().is_none_or(|(_, b)| f.val_accuracy > b.val_accuracy) {
            best = Some((i, f));
        }
    }
    let (best_i, best_fit) = best.expect("budget >= 1");
    let best_ops = candidates[best_i].0.clone();
    let mut retrains = candidates.len();
    let final_fit = if probe_cfg.epochs == cfg.epochs {
        best_fit
    } else {
        retrains += 1;
        fit(&best_ops, graph, split, &data, cfg, seed)?
    };
    let logits = eval_logits(&final_fit.model, &data, cfg)?;
    let metrics = Metrics {
        accuracy: accuracy(&logits, graph.labels(), split.test()),
        val_accuracy: final_fit.val_accuracy,
        micro_f1: None,
        seconds: (clock.now_ms() - start) / 1000.0,
        best_epoch: final_fit.best_epoch,
        seed,
    };
    Ok(RandomSearchOutcome {
        best: ArchitectureSelection::from_operators(&best_ops),
        metrics,
        candidates,
        retrains,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub mode: SearchMode,
    pub epochs: usize,
    pub mean_epoch_ms: f64,
    pub total_ms: f64,
    pub updated_params: usize,
    pub stabilization_epoch: usize,
}

/// Per-mode timing of searches run on the same data and epoch budget.
pub fn timing_report(traces: &[&SearchTrace]) -> Result<Vec<TimingRow>> {
    if traces.len() < 2 {
        return Err(Error::ConfigMismatch("timing report needs at least two traces".into()));
    }
    let epochs = traces[0].len();
    if traces.iter().any(|t| t.len() != epochs) {
        return Err(Error::ConfigMismatch("traces have different epoch counts".into()));
    }
    Ok(traces
        .iter()
        .map(|t| TimingRow {
            mode: t.mode,
            epochs,
            mean_epoch_ms: t.mean_epoch_ms(),
            total_ms: t.total_ms(),
            updated_params: t.records.first().map_or(0, |r| r.updated_params),
            stabilization_epoch: t.stabilization_epoch(STABILIZATION_WINDOW, STABILIZATION_TOL),
        })
        .collect())
}

impl TimingRow {
    pub fn describe(&self) -> String {
        format!(
            "{}: {} epochs, {:.2} ms/epoch, {:.1} ms total, {} updated parameters, stable at epoch {}",
            self.mode, self.epochs, self.mean_epoch_ms, self.total_ms, self.updated_params, self.stabilization_epoch
        )
    }
}
