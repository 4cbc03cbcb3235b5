use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use nac_core::eval::{
    random_search_baseline, retrain_ops, timing_report, AccuracySummary, RandomSearchConfig, RetrainConfig,
};
use nac_core::graph::{synth_graph, CitationParams, SynthKind};
use nac_core::init::InitScheme;
use nac_core::search::{search, SearchConfig, SearchMode, SearchOutcome};
use nac_core::supernet::Activation;
use nac_core::theory::{self, Status, Verdict};
use nac_core::{OperatorKind, SearchSpaceConfig};

use crate::config::{KvConfig, Resolver};
use crate::dataset::{load_graph, write_dataset, write_json, Dataset, LoadOptions};
use crate::error::{NacError, Result};
use crate::manifest::RunManifest;
use crate::report::{
    alpha_snapshots, trace_rows, write_csv, ArchJson, LeaderboardRow, ResultsJson, SweepRow, TimingCsvRow, VerdictJson,
};
use crate::WallClock;

#[derive(Debug, Parser)]
#[command(name = "nac", version, about = "Architecture search for graph neural networks with frozen random weights")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search an architecture and write arch.json, trace.csv and alpha.json.
    Search(SearchArgs),
    /// Retrain an architecture from scratch over several seeds.
    Retrain(RetrainArgs),
    /// Random-search or single-operator baselines.
    Baseline(BaselineArgs),
    /// Numerical checks of the linear-algebra claims behind the method.
    Verify(VerifyArgs),
    /// Time search modes against each other on one config.
    Bench(BenchArgs),
    /// Grid over init schemes, sparsity weights and seeds.
    Sweep(SweepArgs),
    /// Write a synthetic dataset in the portable format.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory in the portable format.
    #[arg(long)]
    pub data: PathBuf,
    /// Override the per-dataset feature row-normalization default.
    #[arg(long)]
    pub row_normalize: Option<bool>,
    /// Key-value config file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "nac-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpaceArgs {
    /// Search epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub init: Option<InitScheme>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Comma-separated operator names.
    #[arg(long)]
    pub ops: Option<OpList>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub mode: Option<SearchMode>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Record validation accuracy of the current argmax every epoch.
    #[arg(long)]
    pub track_validation: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Number of seeds, starting at --seed.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub activation: Option<Activation>,
}

#[derive(Debug, Args)]
pub struct RetrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// arch.json from a search, or a comma-separated operator list.
    #[arg(long)]
    pub arch: String,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineKind {
    Random,
    Single,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "random")]
    pub kind: BaselineKind,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Epochs per random-search candidate; defaults to the full retrain.
    #[arg(long)]
    pub probe_epochs: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub ops: Option<OpList>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub const CHECKS: [&str; 6] = ["theorem1", "coherence", "spectrum", "dictionary-form", "gradients", "convergence"];
const DEFAULT_CHECKS: &str = "theorem1,coherence,spectrum,dictionary-form,gradients";

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Comma-separated subset of: theorem1, coherence, spectrum,
    /// dictionary-form, gradients, convergence.
    #[arg(long, default_value = DEFAULT_CHECKS)]
    pub check: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "nac-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub modes: Option<ModeList>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Retrain each mode's architecture for the leaderboard; 0 skips it.
    #[arg(long)]
    pub retrain_epochs: Option<usize>,
    /// Random-search budget for an extra leaderboard row; 0 skips it.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub probe_epochs: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Comma-separated sparsity weights.
    #[arg(long)]
    pub rho: Option<F64List>,
    /// Comma-separated init schemes; replaces --init.
    #[arg(long)]
    pub inits: Option<InitList>,
    #[arg(long)]
    pub mode: Option<SearchMode>,
    /// Retrain each cell's architecture; 0 skips it.
    #[arg(long)]
    pub retrain_epochs: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FixtureKind {
    /// Cora-sized citation-like graph with the public split sizes.
    CoraLike,
    /// Two-block stochastic block model.
    Sbm,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, value_enum, default_value = "cora-like")]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

macro_rules! comma_list {
    ($name:ident, $item:ty) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub Vec<$item>);

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                let items = s
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<$item>().map_err(|e| format!("'{t}': {e}")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if items.is_empty() {
                    return Err("empty list".into());
                }
                Ok(Self(items))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    };
}

comma_list!(OpList, OperatorKind);
comma_list!(ModeList, SearchMode);
comma_list!(F64List, f64);
comma_list!(InitList, InitScheme);

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<i32> {
    match command {
        Command::Search(a) => cmd_search(a),
        Command::Retrain(a) => cmd_retrain(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Fixture(a) => cmd_fixture(a),
    }
}

/// Sweep workers, from `NAC_THREADS` (default 1).
pub fn thread_count() -> Result<usize> {
    match std::env::var("NAC_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(NacError::Usage(format!("NAC_THREADS must be a positive integer, got '{v}'"))),
        },
    }
}

struct Session {
    config: Option<KvConfig>,
    dataset: Dataset,
    out: PathBuf,
}

fn open(data: &DataArgs, known: &[&str]) -> Result<Session> {
    let config = data.config.as_deref().map(KvConfig::load).transpose()?;
    if let Some(c) = &config {
        let mut keys = known.to_vec();
        keys.push("row-normalize");
        c.check_keys(&keys)?;
    }
    let mut r = Resolver::new(config.as_ref());
    let row_normalize = r.pick_opt("row-normalize", data.row_normalize)?;
    let dataset = load_graph(&data.data, LoadOptions { row_normalize })?;
    std::fs::create_dir_all(&data.out).map_err(|e| NacError::io(&data.out, e))?;
    Ok(Session {
        config,
        dataset,
        out: data.out.clone(),
    })
}

impl Session {
    fn manifest(&self, command: &str, seed: u64, r: Resolver) -> RunManifest {
        let mut m = RunManifest::new(command, seed);
        m.config = r.resolved;
        m.config.insert("row-normalize".into(), self.dataset.row_normalized.to_string());
        m.dataset = Some(self.dataset.meta.name.clone());
        m.dataset_checksums = self.dataset.checksums.clone();
        m
    }
}

fn note_geniepath(m: &mut RunManifest, ops: &[OperatorKind]) {
    if ops.contains(&OperatorKind::GeniePath) {
        m.notes.push("geniepath: breadth-only attention, no depth gate".into());
    }
}

const SPACE_KEYS: [&str; 6] = ["epochs", "init", "hidden", "layers", "ops", "seed"];
const TRAIN_KEYS: [&str; 5] = ["seeds", "lr", "weight-decay", "dropout", "activation"];

fn resolve_space(r: &mut Resolver, a: &SpaceArgs) -> Result<(SearchSpaceConfig, usize, u64)> {
    let d = SearchSpaceConfig::default();
    let space = SearchSpaceConfig {
        num_layers: r.pick("layers", a.layers, d.num_layers)?,
        operators: r.pick("ops", a.ops.clone(), OpList(d.operators.clone()))?.0,
        hidden_dim: r.pick("hidden", a.hidden, d.hidden_dim)?,
        init_scheme: r.pick("init", a.init, d.init_scheme)?,
        ..d
    };
    let epochs = r.pick("epochs", a.epochs, SearchConfig::default().epochs)?;
    let seed = r.pick("seed", a.seed, 0)?;
    Ok((space, epochs, seed))
}

/// Per-dataset retrain defaults with overrides. Epochs are resolved by the
/// caller because commands that also search name them differently.
fn resolve_train(
    r: &mut Resolver,
    a: &TrainArgs,
    dataset: &str,
    epochs: usize,
    hidden: Option<usize>,
) -> Result<(RetrainConfig, usize)> {
    let d = RetrainConfig::for_dataset(dataset);
    let cfg = RetrainConfig {
        epochs,
        lr: r.pick("lr", a.lr, d.lr)?,
        weight_decay: r.pick("weight-decay", a.weight_decay, d.weight_decay)?,
        hidden: match hidden {
            Some(h) => h,
            None => d.hidden,
        },
        dropout: r.pick("dropout", a.dropout, d.dropout)?,
        activation: r.pick("activation", a.activation, d.activation)?,
        ..d
    };
    r.record("retrain-hidden", cfg.hidden);
    let seeds = r.pick("seeds", a.seeds, d.seeds)?;
    if seeds == 0 {
        return Err(NacError::Usage("--seeds must be at least 1".into()));
    }
    cfg.validate()?;
    Ok((cfg, seeds))
}

fn write_search_outputs(out: &Path, outcome: &SearchOutcome) -> Result<Vec<String>> {
    write_json(&out.join("arch.json"), &ArchJson::from(&outcome.selection))?;
    write_csv(&out.join("trace.csv"), &trace_rows(&outcome.trace))?;
    write_json(&out.join("alpha.json"), &alpha_snapshots(&outcome.trace))?;
    Ok(vec!["arch.json".into(), "trace.csv".into(), "alpha.json".into()])
}

fn cmd_search(a: SearchArgs) -> Result<i32> {
    let mut keys = SPACE_KEYS.to_vec();
    keys.extend(["mode", "rho", "track-validation"]);
    let s = open(&a.data, &keys)?;
    let mut r = Resolver::new(s.config.as_ref());
    let (space, epochs, seed) = resolve_space(&mut r, &a.space)?;
    let cfg = SearchConfig {
        space,
        mode: r.pick("mode", a.mode, SearchMode::Nac)?,
        epochs,
        rho: r.pick("rho", a.rho, SearchConfig::default().rho)?,
        seed,
        track_validation: r.pick("track-validation", a.track_validation, false)?,
        ..SearchConfig::default()
    };
    let outcome = search(&cfg, &s.dataset.graph, &s.dataset.split, &WallClock::new())?;
    let files = write_search_outputs(&s.out, &outcome)?;
    let mut m = s.manifest("search", seed, r);
    m.mode = Some(cfg.mode.name().into());
    note_geniepath(&mut m, &cfg.space.operators);
    m.finish(&s.out, &files)?;
    println!("{}", outcome.selection);
    Ok(0)
}

fn parse_arch(spec: &str) -> Result<Vec<OperatorKind>> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| NacError::io(path, e))?;
        let arch: ArchJson = serde_json::from_str(&text)
            .map_err(|e| NacError::parse(path.display().to_string(), e.line() as u64, e.to_string()))?;
        return arch.operators();
    }
    OperatorKind::parse_list(spec).map_err(NacError::Usage)
}

fn retrain_seeds(
    ops: &[OperatorKind],
    s: &Session,
    cfg: &RetrainConfig,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<ResultsJson> {
    let mut res = ResultsJson::new(ops.iter().map(|o| o.name()).collect());
    for seed in seeds {
        let m = retrain_ops(ops, &s.dataset.graph, &s.dataset.split, cfg, seed, &WallClock::new())?;
        res.push(&m);
    }
    Ok(res)
}

fn cmd_retrain(a: RetrainArgs) -> Result<i32> {
    let mut keys = TRAIN_KEYS.to_vec();
    keys.extend(["epochs", "hidden", "seed"]);
    let s = open(&a.data, &keys)?;
    let ops = parse_arch(&a.arch)?;
    let mut r = Resolver::new(s.config.as_ref());
    let name = s.dataset.meta.name.clone();
    let hidden = r.pick_opt("hidden", a.hidden)?;
    let epochs = r.pick("epochs", a.epochs, RetrainConfig::for_dataset(&name).epochs)?;
    let (cfg, seeds) = resolve_train(&mut r, &a.train, &name, epochs, hidden)?;
    let seed = r.pick("seed", a.seed, 0)?;
    r.record("arch", OpList(ops.clone()));
    let res = retrain_seeds(&ops, &s, &cfg, seed..seed + seeds as u64)?;
    write_json(&s.out.join("results.json"), &res)?;
    let mut m = s.manifest("retrain", seed, r);
    note_geniepath(&mut m, &ops);
    m.finish(&s.out, &["results.json".into()])?;
    println!("test accuracy {:.4} ± {:.4} over {} seeds", res.test_acc_mean, res.test_acc_std, seeds);
    Ok(0)
}

fn cmd_baseline(a: BaselineArgs) -> Result<i32> {
    let mut keys = TRAIN_KEYS.to_vec();
    keys.extend(["epochs", "hidden", "seed", "budget", "probe-epochs", "layers", "ops"]);
    let s = open(&a.data, &keys)?;
    let mut r = Resolver::new(s.config.as_ref());
    let name = s.dataset.meta.name.clone();
    let hidden = r.pick_opt("hidden", a.hidden)?;
    let epochs = r.pick("epochs", a.epochs, RetrainConfig::for_dataset(&name).epochs)?;
    let (cfg, seeds) = resolve_train(&mut r, &a.train, &name, epochs, hidden)?;
    let seed = r.pick("seed", a.seed, 0)?;
    let d = SearchSpaceConfig::default();
    let layers = r.pick("layers", a.layers, d.num_layers)?;
    let ops = r.pick("ops", a.ops, OpList(d.operators))?.0;
    r.record("kind", format!("{:?}", a.kind).to_lowercase());
    let files = match a.kind {
        BaselineKind::Random => {
            let rs = RandomSearchConfig {
                budget: r.pick("budget", a.budget, 5)?,
                num_layers: layers,
                operators: ops.clone(),
                probe_epochs: r.pick_opt("probe-epochs", a.probe_epochs)?,
            };
            let mut res = ResultsJson::new(Vec::new());
            let mut archs = Vec::new();
            for sd in seed..seed + seeds as u64 {
                let out = random_search_baseline(&s.dataset.graph, &s.dataset.split, &rs, &cfg, sd, &WallClock::new())?;
                archs.push(out.best.names().join(" "));
                res.push(&out.metrics);
            }
            res.arch = archs;
            write_json(&s.out.join("results.json"), &res)?;
            println!("random search: test accuracy {:.4} ± {:.4}", res.test_acc_mean, res.test_acc_std);
            vec!["results.json".to_string()]
        }
        BaselineKind::Single => {
            let mut rows = Vec::new();
            for &op in &ops {
                let arch = vec![op; layers];
                let res = retrain_seeds(&arch, &s, &cfg, seed..seed + seeds as u64)?;
                rows.push(LeaderboardRow {
                    method: format!("single:{op}"),
                    arch: res.arch.join(" "),
                    seeds,
                    test_acc_mean: res.test_acc_mean,
                    test_acc_std: res.test_acc_std,
                    test_acc_max: res.test_acc_max,
                    search_s: 0.0,
                });
                println!("{op}: {:.4} ± {:.4}", res.test_acc_mean, res.test_acc_std);
            }
            write_csv(&s.out.join("leaderboard.csv"), &rows)?;
            vec!["leaderboard.csv".to_string()]
        }
    };
    let mut m = s.manifest("baseline", seed, r);
    note_geniepath(&mut m, &ops);
    m.finish(&s.out, &files)?;
    Ok(0)
}

/// Runs one named theory check with its acceptance-level parameters.
pub fn run_check(name: &str, seed: u64) -> Result<Verdict> {
    Ok(match name {
        "theorem1" => theory::theorem1_suite(100, 1e-6, seed)?,
        "coherence" => theory::coherence_suite(4096, 32, 100, 0.08, 95)?,
        "spectrum" => theory::spectrum_suite(64, 3, 100, 95)?,
        "dictionary-form" => theory::dictionary_suite(20, 1e-10, seed)?,
        "gradients" => theory::gradient_verdict(seed, 1e-5)?,
        "convergence" => theory::convergence_verdict(seed)?,
        other => return Err(NacError::Usage(format!("unknown check '{other}'; known: {}", CHECKS.join(", ")))),
    })
}

fn cmd_verify(a: VerifyArgs) -> Result<i32> {
    let names: Vec<&str> = a.check.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if let Some(bad) = names.iter().find(|n| !CHECKS.contains(n)) {
        return Err(NacError::Usage(format!("unknown check '{bad}'; known: {}", CHECKS.join(", "))));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| NacError::io(&a.out, e))?;
    let mut records = Vec::new();
    let mut ok = true;
    for n in names {
        let v = run_check(n, a.seed)?;
        ok &= v.status != Status::Fail;
        println!("{:<16} {:<7} value {:.3e} tolerance {:.3e}  {}", v.check, v.status.name(), v.value, v.tolerance, v.detail);
        records.push(VerdictJson::from(&v));
    }
    write_json(&a.out.join("verdicts.json"), &records)?;
    let mut m = RunManifest::new("verify", a.seed);
    m.config.insert("check".into(), a.check.clone());
    m.finish(&a.out, &["verdicts.json".into()])?;
    Ok(if ok { 0 } else { 1 })
}

fn cmd_bench(a: BenchArgs) -> Result<i32> {
    let mut keys = SPACE_KEYS.to_vec();
    keys.extend(TRAIN_KEYS);
    keys.extend(["modes", "rho", "retrain-epochs", "budget", "probe-epochs"]);
    let s = open(&a.data, &keys)?;
    let mut r = Resolver::new(s.config.as_ref());
    let (space, epochs, seed) = resolve_space(&mut r, &a.space)?;
    let modes = r.pick("modes", a.modes, ModeList(vec![SearchMode::Nac, SearchMode::NacUpdating]))?.0;
    let rho = r.pick("rho", a.rho, SearchConfig::default().rho)?;
    let name = s.dataset.meta.name.clone();
    let retrain_epochs = r.pick("retrain-epochs", a.retrain_epochs, 0)?;
    let (train, seeds) = resolve_train(&mut r, &a.train, &name, retrain_epochs.max(1), None)?;
    let budget = r.pick("budget", a.budget, 0)?;
    let probe_epochs = r.pick_opt("probe-epochs", a.probe_epochs)?;

    let mut outcomes = Vec::new();
    for &mode in &modes {
        let cfg = SearchConfig {
            space: space.clone(),
            mode,
            epochs,
            rho,
            seed,
            track_validation: true,
            ..SearchConfig::default()
        };
        outcomes.push(search(&cfg, &s.dataset.graph, &s.dataset.split, &WallClock::new())?);
    }
    let traces: Vec<_> = outcomes.iter().map(|o| &o.trace).collect();
    let rows: Vec<TimingCsvRow> = timing_report(&traces)?
        .iter()
        .zip(&outcomes)
        .map(|(row, o)| {
            println!("{}  {}", row.describe(), o.selection);
            TimingCsvRow::new(row, &o.selection)
        })
        .collect();
    write_csv(&s.out.join("timing.csv"), &rows)?;
    let mut files = vec!["timing.csv".to_string()];

    if retrain_epochs > 0 {
        let mut board = Vec::new();
        for o in &outcomes {
            let res = retrain_seeds(&o.selection.operators, &s, &train, seed..seed + seeds as u64)?;
            board.push(LeaderboardRow {
                method: o.trace.mode.name().into(),
                arch: res.arch.join(" "),
                seeds,
                test_acc_mean: res.test_acc_mean,
                test_acc_std: res.test_acc_std,
                test_acc_max: res.test_acc_max,
                search_s: o.trace.total_ms() / 1000.0,
            });
        }
        if budget > 0 {
            let rs = RandomSearchConfig {
                budget,
                num_layers: space.num_layers,
                operators: space.operators.clone(),
                probe_epochs,
            };
            let mut accs = Vec::new();
            let mut archs = Vec::new();
            let mut secs = 0.0;
            for sd in seed..seed + seeds as u64 {
                let out = random_search_baseline(&s.dataset.graph, &s.dataset.split, &rs, &train, sd, &WallClock::new())?;
                accs.push(out.metrics.accuracy);
                archs.push(out.best.names().join(" "));
                secs += out.metrics.seconds;
            }
            let sum = AccuracySummary::of(&accs);
            board.push(LeaderboardRow {
                method: "random".into(),
                arch: archs.join(" | "),
                seeds,
                test_acc_mean: sum.mean,
                test_acc_std: sum.std,
                test_acc_max: sum.max,
                search_s: secs,
            });
        }
        write_csv(&s.out.join("leaderboard.csv"), &board)?;
        files.push("leaderboard.csv".into());
    }
    let mut m = s.manifest("bench", seed, r);
    note_geniepath(&mut m, &space.operators);
    m.finish(&s.out, &files)?;
    Ok(0)
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let mut keys = SPACE_KEYS.to_vec();
    keys.extend(TRAIN_KEYS);
    keys.extend(["rho", "inits", "mode", "retrain-epochs"]);
    let s = open(&a.data, &keys)?;
    let mut r = Resolver::new(s.config.as_ref());
    let (space, epochs, seed) = resolve_space(&mut r, &a.space)?;
    let rhos = r.pick("rho", a.rho, F64List(vec![0.001, 0.1, 1.0, 10.0]))?.0;
    let inits = r.pick("inits", a.inits, InitList(vec![space.init_scheme]))?.0;
    let mode = r.pick("mode", a.mode, SearchMode::Nac)?;
    let name = s.dataset.meta.name.clone();
    let retrain_epochs = r.pick("retrain-epochs", a.retrain_epochs, 0)?;
    let (train, seeds) = resolve_train(&mut r, &a.train, &name, retrain_epochs.max(1), None)?;

    let mut cells = Vec::new();
    for &init in &inits {
        for &rho in &rhos {
            for sd in seed..seed + seeds as u64 {
                cells.push((init, rho, sd));
            }
        }
    }
    let threads = thread_count()?.min(cells.len().max(1));
    r.record("threads", threads);
    let results: Mutex<Vec<Option<Result<SweepRow>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let run_cell = |(init, rho, sd): (InitScheme, f64, u64)| -> Result<SweepRow> {
        let cfg = SearchConfig {
            space: SearchSpaceConfig {
                init_scheme: init,
                ..space.clone()
            },
            mode,
            epochs,
            rho,
            seed: sd,
            ..SearchConfig::default()
        };
        let out = search(&cfg, &s.dataset.graph, &s.dataset.split, &nac_core::NullClock)?;
        let alpha = out.network.alpha.data();
        let test_acc = if retrain_epochs > 0 {
            let m = retrain_ops(&out.selection.operators, &s.dataset.graph, &s.dataset.split, &train, sd, &nac_core::NullClock)?;
            Some(m.accuracy)
        } else {
            None
        };
        Ok(SweepRow {
            init: init.name().into(),
            rho,
            seed: sd,
            arch: out.selection.names().join(" "),
            near_zero: alpha.iter().filter(|v| v.abs() < 1e-3).count(),
            min_abs_alpha: alpha.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())),
            test_acc,
        })
    };
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let row = run_cell(cells[i]);
                results.lock().expect("sweep results")[i] = Some(row);
            });
        }
    });
    let rows = results
        .into_inner()
        .expect("sweep results")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<Result<Vec<_>>>()?;
    write_csv(&s.out.join("sweep.csv"), &rows)?;
    let mut m = s.manifest("sweep", seed, r);
    m.mode = Some(mode.name().into());
    note_geniepath(&mut m, &space.operators);
    m.finish(&s.out, &["sweep.csv".into()])?;
    println!("{} cells written", rows.len());
    Ok(0)
}

fn cmd_fixture(a: FixtureArgs) -> Result<i32> {
    let kind = match a.kind {
        FixtureKind::CoraLike => SynthKind::Citation(CitationParams::cora_like()),
        FixtureKind::Sbm => SynthKind::Sbm {
            blocks: 2,
            n: 200,
            p_in: 0.1,
            p_out: 0.01,
            feature_noise: 1.0,
        },
    };
    let (graph, split) = synth_graph(&kind, a.seed)?;
    write_dataset(&a.out, &graph, &split)?;
    println!("{} nodes, {} edges written to {}", graph.num_nodes(), graph.edges().len(), a.out.display());
    Ok(0)
}
