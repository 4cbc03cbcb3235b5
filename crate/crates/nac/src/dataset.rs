//! The portable dataset directory: `graph.json`, `edges.csv`,
//! `features.csv`, `labels.csv` and `splits.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::Path;

use nac_core::{Graph, Matrix, Split};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NacError, Result};

pub const FILES: [&str; 5] = ["graph.json", "edges.csv", "features.csv", "labels.csv", "splits.json"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitsFile {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// `None` applies the per-dataset default.
    pub row_normalize: Option<bool>,
}

#[derive(Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub split: Split,
    pub meta: GraphMeta,
    pub row_normalized: bool,
    /// SHA-256 of each file, keyed by file name.
    pub checksums: BTreeMap<String, String>,
}

/// Citation graphs get row-normalized features unless told otherwise.
pub fn default_row_normalize(name: &str) -> bool {
    let n = name.to_ascii_lowercase();
    ["cora", "citeseer", "pubmed"].iter().any(|c| n.contains(c))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| NacError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, file: &str) -> Result<T> {
    let path = dir.join(file);
    let text = fs::read_to_string(&path).map_err(|e| NacError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| NacError::parse(file, e.line() as u64, e.to_string()))
}

/// Every non-empty row of a headerless CSV file with its 1-based line number.
fn read_rows(dir: &Path, file: &str) -> Result<Vec<(u64, Vec<String>)>> {
    let path = dir.join(file);
    let f = File::open(&path).map_err(|e| NacError::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(f);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            NacError::parse(file, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(file: &str, line: u64, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| NacError::parse(file, line, format!("invalid {what} '{s}'")))
}

pub fn load_graph(dir: &Path, opts: LoadOptions) -> Result<Dataset> {
    let meta: GraphMeta = read_json(dir, "graph.json")?;
    let n = meta.num_nodes;

    let mut edges = Vec::new();
    for (line, row) in read_rows(dir, "edges.csv")? {
        if row.len() != 2 {
            return Err(NacError::parse("edges.csv", line, format!("expected 2 fields, found {}", row.len())));
        }
        let s: usize = parse_field("edges.csv", line, &row[0], "node index")?;
        let d: usize = parse_field("edges.csv", line, &row[1], "node index")?;
        if s >= n || d >= n {
            return Err(NacError::parse("edges.csv", line, format!("node index out of range for {n} nodes")));
        }
        if s >= d {
            return Err(NacError::parse("edges.csv", line, format!("expected src < dst, found {s},{d}")));
        }
        edges.push((s, d));
    }

    let rows = read_rows(dir, "features.csv")?;
    if rows.len() != n {
        return Err(NacError::format("features.csv", format!("{} rows for {n} nodes", rows.len())));
    }
    let mut data = Vec::with_capacity(n * meta.feature_dim);
    for (line, row) in rows {
        if row.len() != meta.feature_dim {
            return Err(NacError::parse(
                "features.csv",
                line,
                format!("expected {} values, found {}", meta.feature_dim, row.len()),
            ));
        }
        for v in &row {
            let x: f64 = parse_field("features.csv", line, v, "number")?;
            if !x.is_finite() {
                return Err(NacError::parse("features.csv", line, format!("non-finite value '{v}'")));
            }
            data.push(x);
        }
    }
    let features = Matrix::new(n, meta.feature_dim, data)?;

    let rows = read_rows(dir, "labels.csv")?;
    if rows.len() != n {
        return Err(NacError::format("labels.csv", format!("{} labels for {n} nodes", rows.len())));
    }
    let mut labels = Vec::with_capacity(n);
    for (line, row) in rows {
        if row.len() != 1 {
            return Err(NacError::parse("labels.csv", line, "expected one label per line"));
        }
        let y: usize = parse_field("labels.csv", line, &row[0], "label")?;
        if y >= meta.num_classes {
            return Err(NacError::parse(
                "labels.csv",
                line,
                format!("label {y} out of range for {} classes", meta.num_classes),
            ));
        }
        labels.push(y);
    }

    let splits: SplitsFile = read_json(dir, "splits.json")?;
    let split = Split::new(splits.train, splits.val, splits.test, n)
        .map_err(|e| NacError::format("splits.json", e.to_string()))?;
    let mut graph = Graph::new(meta.name.clone(), n, edges, features, labels, meta.num_classes)
        .map_err(|e| NacError::format("edges.csv", e.to_string()))?;
    let row_normalized = opts.row_normalize.unwrap_or_else(|| default_row_normalize(&meta.name));
    if row_normalized {
        graph.row_normalize_features();
    }

    let mut checksums = BTreeMap::new();
    for f in FILES {
        checksums.insert(f.to_string(), sha256_file(&dir.join(f))?);
    }
    Ok(Dataset {
        graph,
        split,
        meta,
        row_normalized,
        checksums,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| NacError::io(path, e))
}

/// Writes `graph` and `split` in the portable format. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_dataset(dir: &Path, graph: &Graph, split: &Split) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| NacError::io(dir, e))?;
    let meta = GraphMeta {
        num_nodes: graph.num_nodes(),
        feature_dim: graph.feature_dim(),
        num_classes: graph.num_classes(),
        name: graph.name().to_string(),
    };
    write_json(&dir.join("graph.json"), &meta)?;

    let mut edges = String::new();
    for (s, d) in graph.edges() {
        edges.push_str(&format!("{s},{d}\n"));
    }
    write_text(&dir.join("edges.csv"), &edges)?;

    let x = graph.features();
    let mut features = String::new();
    for r in 0..x.rows() {
        let line: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
        features.push_str(&line.join(","));
        features.push('\n');
    }
    write_text(&dir.join("features.csv"), &features)?;

    let labels: String = graph.labels().iter().map(|y| format!("{y}\n")).collect();
    write_text(&dir.join("labels.csv"), &labels)?;

    let splits = SplitsFile {
        train: split.train().to_vec(),
        val: split.val().to_vec(),
        test: split.test().to_vec(),
    };
    write_json(&dir.join("splits.json"), &splits)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}
