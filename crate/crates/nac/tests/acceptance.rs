//! One pass/fail line per headline criterion. Runs sequentially so the
//! timing comparisons are not disturbed by other tests.
//!
//! Uses the real Cora directory from `NAC_CORA_DIR` when set, otherwise a
//! Cora-sized synthetic citation graph written and loaded through the
//! portable dataset format.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use nac::cli::run_check;
use nac::dataset::{load_graph, write_dataset, Dataset, LoadOptions};
use nac::WallClock;
use nac_core::eval::{random_search_baseline, retrain_ops, AccuracySummary, Metrics, RandomSearchConfig, RetrainConfig};
use nac_core::graph::{synth_graph, CitationParams, SynthKind};
use nac_core::search::{search, SearchConfig, SearchMode, SearchOutcome};
use nac_core::theory::Status;
use nac_core::{OperatorKind, SearchSpaceConfig, Supernet};

// Same allocator as the `nac` binary, so timings match what it ships.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const SEEDS: [u64; 4] = [0, 1, 2, 3];
const RHOS: [f64; 4] = [0.001, 0.1, 1.0, 10.0];
const REFERENCE_CORA: &str = "87.41 ± 0.92";
const RANDOM_BUDGET: usize = 5;
const RANDOM_PROBE_EPOCHS: usize = 50;

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Bench {
    data: Dataset,
    retrain: RetrainConfig,
    /// Retrain results keyed by (architecture, seed).
    memo: BTreeMap<(Vec<String>, u64), Metrics>,
    lines: Vec<Line>,
}

impl Bench {
    fn record(&mut self, name: &'static str, pass: bool, detail: String) {
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push(Line { name, pass, detail });
    }

    fn search(&self, mode: SearchMode, rho: f64, seed: u64, track_validation: bool) -> SearchOutcome {
        let cfg = SearchConfig {
            mode,
            rho,
            seed,
            track_validation,
            ..SearchConfig::default()
        };
        search(&cfg, &self.data.graph, &self.data.split, &WallClock::new()).expect("search")
    }

    fn retrain(&mut self, ops: &[OperatorKind], seed: u64) -> Metrics {
        let key = (ops.iter().map(|o| o.name()).collect::<Vec<_>>(), seed);
        if let Some(m) = self.memo.get(&key) {
            return m.clone();
        }
        let m = retrain_ops(ops, &self.data.graph, &self.data.split, &self.retrain, seed, &WallClock::new())
            .expect("retrain");
        self.memo.insert(key, m.clone());
        m
    }
}

fn dataset() -> (Dataset, Option<tempfile::TempDir>, String) {
    if let Some(dir) = std::env::var_os("NAC_CORA_DIR") {
        let dir = PathBuf::from(dir);
        let d = load_graph(&dir, LoadOptions::default()).expect("load NAC_CORA_DIR");
        return (d, None, format!("Cora from {}", dir.display()));
    }
    let tmp = tempfile::TempDir::new().unwrap();
    let (g, split) = synth_graph(&SynthKind::Citation(CitationParams::cora_like()), 0).unwrap();
    write_dataset(tmp.path(), &g, &split).unwrap();
    let d = load_graph(tmp.path(), LoadOptions::default()).unwrap();
    (d, Some(tmp), "synthetic Cora-sized citation graph (set NAC_CORA_DIR for real Cora)".into())
}

fn theory_line(b: &mut Bench, name: &'static str, check: &str, budget_s: Option<f64>) {
    let t = Instant::now();
    let v = run_check(check, 0).expect(check);
    let secs = t.elapsed().as_secs_f64();
    let in_time = budget_s.is_none_or(|s| secs < s);
    let limit = budget_s.map_or(String::new(), |s| format!(" (limit {s:.0} s)"));
    b.record(
        name,
        v.status == Status::Pass && in_time,
        format!("{} value {:.3e} tolerance {:.3e}, {secs:.2} s{limit}; {}", v.status.name(), v.value, v.tolerance, v.detail),
    );
}

fn full_parameter_count(net: &Supernet) -> usize {
    net.alpha.len()
        + net.input_proj.len()
        + net.layer_weights.iter().map(|w| w.len()).sum::<usize>()
        + net.operator_params.iter().flatten().flat_map(|p| &p.tensors).map(|t| t.len()).sum::<usize>()
        + net.output_weights.len()
}

fn main() {
    // Respect `cargo test -- --list` and name filters from the harness.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }

    let (data, _tmp, source) = dataset();
    println!("dataset: {source}");
    let retrain = RetrainConfig::for_dataset(&data.meta.name);
    let mut b = Bench {
        data,
        retrain,
        memo: BTreeMap::new(),
        lines: Vec::new(),
    };

    theory_line(&mut b, "theorem1 equivalence", "theorem1", Some(5.0));
    theory_line(&mut b, "gradient suite", "gradients", Some(30.0));
    theory_line(&mut b, "coherence", "coherence", None);
    theory_line(&mut b, "spectrum", "spectrum", None);
    theory_line(&mut b, "dictionary form", "dictionary-form", None);

    // End-to-end: search then retrain on every seed, against random search.
    // The search runs as `nac search` does by default, without tracking.
    let mut nac_runs = Vec::new();
    let mut nac_acc = Vec::new();
    let t = Instant::now();
    for &seed in &SEEDS {
        let out = b.search(SearchMode::Nac, 1e-3, seed, false);
        let m = b.retrain(&out.selection.operators, seed);
        println!("  nac seed {seed}: {} test {:.4}", out.selection, m.accuracy);
        nac_acc.push(m.accuracy);
        nac_runs.push(out);
    }
    let nac_secs = t.elapsed().as_secs_f64();
    let space = SearchSpaceConfig::default();
    let rs = RandomSearchConfig {
        budget: RANDOM_BUDGET,
        num_layers: space.num_layers,
        operators: space.operators.clone(),
        probe_epochs: Some(RANDOM_PROBE_EPOCHS),
    };
    let t = Instant::now();
    let mut rs_acc = Vec::new();
    for &seed in &SEEDS {
        let out = random_search_baseline(&b.data.graph, &b.data.split, &rs, &b.retrain, seed, &WallClock::new())
            .expect("random search");
        println!("  random seed {seed}: {} test {:.4}", out.best, out.metrics.accuracy);
        rs_acc.push(out.metrics.accuracy);
    }
    let rs_secs = t.elapsed().as_secs_f64();
    let nac_sum = AccuracySummary::of(&nac_acc);
    let rs_sum = AccuracySummary::of(&rs_acc);
    b.record(
        "end-to-end cora",
        nac_sum.mean >= 0.78 && nac_sum.mean >= rs_sum.mean && nac_secs < 20.0 * 60.0,
        format!(
            "nac {:.2} ± {:.2} (need ≥ 78.00), random search {:.2} ± {:.2} on paired seeds, reported reference {REFERENCE_CORA}; \
             nac pipeline {:.1} min (limit 20), random search {:.1} min",
            100.0 * nac_sum.mean,
            100.0 * nac_sum.std,
            100.0 * rs_sum.mean,
            100.0 * rs_sum.std,
            nac_secs / 60.0,
            rs_secs / 60.0
        ),
    );

    // Both modes with validation tracked, for convergence; seed 0 also feeds
    // the complexity comparison, which uses the same config for both modes.
    let tracked: Vec<SearchOutcome> = SEEDS.iter().map(|&s| b.search(SearchMode::Nac, 1e-3, s, true)).collect();
    let updating: Vec<SearchOutcome> = SEEDS.iter().map(|&s| b.search(SearchMode::NacUpdating, 1e-3, s, true)).collect();
    let plus = b.search(SearchMode::NacPlus, 1e-3, 0, true);
    let nac0 = &nac_runs[0];
    let (l, k) = (space.num_layers, space.num_operators());
    let counts = [
        nac0.trace.records[0].updated_params,
        plus.trace.records[0].updated_params,
        updating[0].trace.records[0].updated_params,
    ];
    let expected = [l * k, l * k + nac0.network.output_weights.len(), full_parameter_count(&updating[0].network)];
    let hash_kept = nac_runs.iter().all(|o| o.network.fixed_weight_hash() == o.initial_weight_hash);
    let (t_nac, t_upd) = (tracked[0].trace.total_ms(), updating[0].trace.total_ms());
    b.record(
        "no-update and complexity",
        hash_kept && counts == expected && t_nac < t_upd,
        format!(
            "fixed weights unchanged on all seeds: {hash_kept}; updated params nac/nac-plus/nac-updating {counts:?} \
             (expected {expected:?}); search wall-clock nac {:.1} s vs nac-updating {:.1} s",
            t_nac / 1000.0,
            t_upd / 1000.0
        ),
    );

    // Sparsity ablation on seed 0; rho = 0.001 is the end-to-end run.
    let mut near_zero = Vec::new();
    let mut accs = Vec::new();
    let mut archs = Vec::new();
    for &rho in &RHOS {
        let out = if rho == 1e-3 { None } else { Some(b.search(SearchMode::Nac, rho, 0, false)) };
        let out = out.as_ref().unwrap_or(nac0);
        let alpha = out.network.alpha.data();
        near_zero.push(alpha.iter().filter(|v| v.abs() < 1e-3).count());
        let ops = out.selection.operators.clone();
        accs.push(b.retrain(&ops, 0).accuracy);
        archs.push(out.selection.names().join(" "));
    }
    let monotone = near_zero.windows(2).all(|w| w[0] <= w[1]);
    let spread = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - accs.iter().cloned().fold(f64::INFINITY, f64::min);
    b.record(
        "sparsity ablation",
        monotone && spread <= 0.03,
        format!(
            "rho {RHOS:?}: near-zero counts {near_zero:?}, test accuracy {:?}, spread {:.2} points (limit 3); archs {archs:?}",
            accs.iter().map(|a| (a * 1e4).round() / 100.0).collect::<Vec<_>>(),
            100.0 * spread
        ),
    );

    let stab = |o: &SearchOutcome| o.trace.stabilization_epoch(10, 0.005);
    let pairs: Vec<(usize, usize)> = tracked.iter().zip(&updating).map(|(n, u)| (stab(n), stab(u))).collect();
    let wins = pairs.iter().filter(|(n, u)| n <= u).count();
    b.record(
        "convergence ordering",
        wins >= 3,
        format!("stabilization epoch (nac, nac-updating) per seed {pairs:?}; nac no later on {wins}/4 (need 3)"),
    );

    let failed: Vec<&str> = b.lines.iter().filter(|l| !l.pass).map(|l| l.name).collect();
    println!("{} of {} criteria passed", b.lines.len() - failed.len(), b.lines.len());
    for l in b.lines.iter().filter(|l| !l.pass) {
        eprintln!("failed: {} ({})", l.name, l.detail);
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
