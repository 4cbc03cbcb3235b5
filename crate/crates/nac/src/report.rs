//! JSON and CSV result files.

use std::fs::File;
use std::path::Path;

use nac_core::eval::TimingRow;
use nac_core::search::SearchTrace;
use nac_core::theory::Verdict;
use nac_core::{ArchitectureSelection, Matrix, OperatorKind};
use serde::{Deserialize, Serialize};

use crate::error::{NacError, Result};
use crate::manifest::MANIFEST_FILE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchJson {
    pub layers: Vec<String>,
    pub alpha: Vec<Vec<f64>>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

impl From<&ArchitectureSelection> for ArchJson {
    fn from(a: &ArchitectureSelection) -> Self {
        Self {
            layers: a.names(),
            alpha: rows(&a.alpha),
        }
    }
}

impl ArchJson {
    pub fn operators(&self) -> Result<Vec<OperatorKind>> {
        self.layers
            .iter()
            .map(|s| s.parse().map_err(|e: String| NacError::format("arch.json", e)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSnapshot {
    pub epoch: usize,
    pub alpha: Vec<Vec<f64>>,
    pub val_acc: Option<f64>,
}

pub fn alpha_snapshots(trace: &SearchTrace) -> Vec<AlphaSnapshot> {
    trace
        .records
        .iter()
        .map(|r| AlphaSnapshot {
            epoch: r.epoch,
            alpha: rows(&r.alpha),
            val_acc: r.val_acc,
        })
        .collect()
}

/// Per-seed retrain results plus their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsJson {
    pub arch: Vec<String>,
    pub seeds: Vec<u64>,
    pub test_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub best_epoch: Vec<usize>,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub test_acc_max: f64,
    pub time_s: f64,
    pub manifest: String,
}

impl ResultsJson {
    pub fn new(arch: Vec<String>) -> Self {
        Self {
            arch,
            seeds: Vec::new(),
            test_acc: Vec::new(),
            val_acc: Vec::new(),
            best_epoch: Vec::new(),
            test_acc_mean: 0.0,
            test_acc_std: 0.0,
            test_acc_max: 0.0,
            time_s: 0.0,
            manifest: MANIFEST_FILE.into(),
        }
    }

    pub fn push(&mut self, m: &nac_core::eval::Metrics) {
        self.seeds.push(m.seed);
        self.test_acc.push(m.accuracy);
        self.val_acc.push(m.val_accuracy);
        self.best_epoch.push(m.best_epoch);
        self.time_s += m.seconds;
        let s = nac_core::eval::AccuracySummary::of(&self.test_acc);
        self.test_acc_mean = s.mean;
        self.test_acc_std = s.std;
        self.test_acc_max = s.max;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictJson {
    pub check: String,
    pub status: String,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl From<&Verdict> for VerdictJson {
    fn from(v: &Verdict) -> Self {
        Self {
            check: v.check.clone(),
            status: v.status.name().to_string(),
            value: v.value,
            tolerance: v.tolerance,
            detail: v.detail.clone(),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| NacError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> NacError + '_ {
    move |e| NacError::io(path, std::io::Error::other(e))
}

/// Writes `rows` of serializable records with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| NacError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub ce: f64,
    pub l1: f64,
    pub ms: f64,
}

pub fn trace_rows(trace: &SearchTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            epoch: r.epoch,
            loss: r.loss,
            ce: r.ce,
            l1: r.l1,
            ms: r.ms,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCsvRow {
    pub mode: String,
    pub epochs: usize,
    pub mean_epoch_ms: f64,
    pub total_ms: f64,
    pub updated_params: usize,
    pub stabilization_epoch: usize,
    pub arch: String,
}

impl TimingCsvRow {
    pub fn new(row: &TimingRow, arch: &ArchitectureSelection) -> Self {
        Self {
            mode: row.mode.name().into(),
            epochs: row.epochs,
            mean_epoch_ms: row.mean_epoch_ms,
            total_ms: row.total_ms,
            updated_params: row.updated_params,
            stabilization_epoch: row.stabilization_epoch,
            arch: arch.names().join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub method: String,
    pub arch: String,
    pub seeds: usize,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub test_acc_max: f64,
    pub search_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub init: String,
    pub rho: f64,
    pub seed: u64,
    pub arch: String,
    /// Coefficients with `|alpha| < 1e-3` after the search.
    pub near_zero: usize,
    pub min_abs_alpha: f64,
    pub test_acc: Option<f64>,
}
