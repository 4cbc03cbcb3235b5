use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use nac::report::{ArchJson, SweepRow, TimingCsvRow, VerdictJson};
use tempfile::TempDir;

fn nac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nac"))
        .args(args)
        .env_remove("NAC_THREADS")
        .output()
        .expect("spawn nac")
}

fn ok(args: &[&str]) -> Output {
    let out = nac(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "nac {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Written once per test binary and shared read-only.
fn fixture(kind: &'static str) -> &'static Path {
    static CORA: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    static SBM: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    let cell = if kind == "cora-like" { &CORA } else { &SBM };
    &cell
        .get_or_init(|| {
            let dir = TempDir::new().unwrap();
            let data = dir.path().join(kind);
            ok(&["fixture", "--kind", kind, "--out", s(&data)]);
            (dir, data)
        })
        .1
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn read_csv<T: serde::de::DeserializeOwned>(p: &Path) -> Vec<T> {
    csv::Reader::from_path(p).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(nac(&["search"]).status.code(), Some(2));
    assert_eq!(nac(&["search", "--data", "x", "--mode", "bogus"]).status.code(), Some(2));
    assert_eq!(nac(&["verify", "--check", "nonsense"]).status.code(), Some(2));
    assert_eq!(nac(&[]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let out = nac(&["search", "--data", s(&tmp.path().join("missing")), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("graph.json"));
}

#[test]
fn search_defaults_on_cora_fixture() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    ok(&["search", "--data", s(fixture("cora-like")), "--out", s(&out)]);
    let arch: ArchJson = read_json(&out.join("arch.json"));
    assert_eq!(arch.layers.len(), 3);
    assert_eq!(arch.alpha.len(), 3);
    assert!(arch.operators().is_ok());
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 101);

    let m: serde_json::Value = read_json(&out.join("manifest.json"));
    assert_eq!(m["command"], "search");
    assert_eq!(m["mode"], "nac");
    assert_eq!(m["config"]["row-normalize"], "true");
    for f in ["arch.json", "trace.csv", "alpha.json"] {
        assert_eq!(m["outputs"][f].as_str().unwrap().len(), 64, "{f}");
    }
}

#[test]
fn single_operator_space_selects_it_everywhere() {
    let tmp = TempDir::new().unwrap();
    ok(&["search", "--data", s(fixture("cora-like")), "--ops", "gcn", "--epochs", "3", "--out", s(tmp.path())]);
    let arch: ArchJson = read_json(&tmp.path().join("arch.json"));
    assert_eq!(arch.layers, ["gcn", "gcn", "gcn"]);
}

#[test]
fn verify_writes_one_record_per_check() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "verify",
        "--check",
        "theorem1,coherence,spectrum,dictionary-form,gradients",
        "--out",
        s(tmp.path()),
    ]);
    let v: Vec<VerdictJson> = read_json(&tmp.path().join("verdicts.json"));
    assert_eq!(v.len(), 5);
    assert!(v.iter().all(|r| r.status == "pass"), "{v:?}");
}

#[test]
fn sweep_grid_has_one_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "sweep",
        "--data",
        s(fixture("cora-like")),
        "--rho",
        "0.001,0.1,1,10",
        "--seeds",
        "4",
        "--epochs",
        "2",
        "--out",
        s(tmp.path()),
    ]);
    let rows: Vec<SweepRow> = read_csv(&tmp.path().join("sweep.csv"));
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.test_acc.is_none() && r.arch.split(' ').count() == 3));
}

#[test]
fn bench_nac_is_faster_than_updating() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "bench",
        "--data",
        s(fixture("cora-like")),
        "--modes",
        "nac,nac-updating",
        "--epochs",
        "10",
        "--out",
        s(tmp.path()),
    ]);
    let rows: Vec<TimingCsvRow> = read_csv(&tmp.path().join("timing.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].mode.as_str(), rows[1].mode.as_str()), ("nac", "nac-updating"));
    assert!(rows[0].total_ms < rows[1].total_ms, "{rows:?}");
    assert!(rows[0].updated_params < rows[1].updated_params);
}

/// Drops the named columns from a CSV so timing noise does not count.
fn without_columns(text: &str, drop: &[&str]) -> String {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().clone();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !drop.contains(&&header[i])).collect();
    let mut out = String::new();
    for rec in std::iter::once(Ok(header)).chain(r.records()) {
        let rec = rec.unwrap();
        let cells: Vec<&str> = keep.iter().map(|&i| &rec[i]).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let data = fixture("sbm");
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["search", "--data", s(data), "--epochs", "15", "--seed", "3", "--track-validation", "true", "--out", s(out)]);
        ok(&["retrain", "--data", s(data), "--arch", s(&a.join("arch.json")), "--epochs", "20", "--seeds", "2", "--hidden", "16", "--out", s(&out.join("retrain"))]);
        ok(&["sweep", "--data", s(data), "--rho", "0,0.5", "--seeds", "2", "--epochs", "5", "--retrain-epochs", "5", "--hidden", "8", "--out", s(&out.join("sweep"))]);
    }
    for f in ["arch.json", "alpha.json", "sweep/sweep.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let trace = |p: &Path| without_columns(&fs::read_to_string(p.join("trace.csv")).unwrap(), &["ms"]);
    assert_eq!(trace(&a), trace(&b));
    let results = |p: &Path| {
        let mut v: serde_json::Value = read_json(&p.join("retrain/results.json"));
        v.as_object_mut().unwrap().remove("time_s");
        v
    };
    assert_eq!(results(&a), results(&b));
}

#[test]
fn threaded_sweep_matches_sequential() {
    let data = fixture("sbm");
    let tmp = TempDir::new().unwrap();
    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--data".into(),
            s(data).into(),
            "--rho".into(),
            "0.001,1".into(),
            "--seeds".into(),
            "3".into(),
            "--epochs".into(),
            "4".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    let out = Command::new(env!("CARGO_BIN_EXE_nac"))
        .args(args(&b))
        .env("NAC_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(a.join("sweep.csv")).unwrap(), fs::read(b.join("sweep.csv")).unwrap());
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let data = fixture("sbm");
    let tmp = TempDir::new().unwrap();
    let conf = tmp.path().join("run.conf");
    fs::write(&conf, "# search settings\nepochs = 4\nops = gcn,mlp\nseed = 9\n").unwrap();
    let out = tmp.path().join("run");
    ok(&["search", "--data", s(data), "--config", s(&conf), "--seed", "2", "--out", s(&out)]);
    let m: serde_json::Value = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["epochs"], "4");
    assert_eq!(m["config"]["ops"], "gcn,mlp");
    assert_eq!(m["config"]["seed"], "2");
    assert_eq!(m["config"]["rho"], "0.001");
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 5);

    fs::write(&conf, "epochs = 4\nfrobnicate = 1\n").unwrap();
    let bad = nac(&["search", "--data", s(data), "--config", s(&conf), "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2: unknown key 'frobnicate'"));
}

#[test]
fn baselines_write_results() {
    let data = fixture("sbm");
    let tmp = TempDir::new().unwrap();
    let common = ["--epochs", "10", "--seeds", "1", "--hidden", "8"];
    let rs = tmp.path().join("rs");
    let mut args = vec!["baseline", "--data", s(data), "--kind", "random", "--budget", "2", "--out", s(&rs)];
    args.extend(common);
    ok(&args);
    let v: serde_json::Value = read_json(&rs.join("results.json"));
    assert_eq!(v["test_acc"].as_array().unwrap().len(), 1);

    let single = tmp.path().join("single");
    let mut args = vec!["baseline", "--data", s(data), "--kind", "single", "--ops", "gcn,mlp", "--out", s(&single)];
    args.extend(common);
    ok(&args);
    let text = fs::read_to_string(single.join("leaderboard.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("single:gcn"));
}

#[test]
fn retrain_accepts_an_operator_list() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "retrain",
        "--data",
        s(fixture("sbm")),
        "--arch",
        "gcn,sage_mean",
        "--epochs",
        "5",
        "--seeds",
        "2",
        "--hidden",
        "8",
        "--out",
        s(tmp.path()),
    ]);
    let v: serde_json::Value = read_json(&tmp.path().join("results.json"));
    assert_eq!(v["arch"], serde_json::json!(["gcn", "sage_mean"]));
    assert_eq!(v["seeds"], serde_json::json!([0, 1]));
    assert_eq!(nac(&["retrain", "--data", s(fixture("sbm")), "--arch", "gcn,warp", "--out", s(tmp.path())]).status.code(), Some(2));
}
