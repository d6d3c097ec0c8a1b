//! Text dataset formats, `key = value` configs, metrics emission and
//! parameter checkpoints.
//!
//! Formats (all plain text, `#` starts a comment in edge lists and configs):
//!
//! * edges: one `u v` pair of 0-based decimal ids per line;
//! * labels: one integer per line, line i labels node i;
//! * features / embeddings: first line `N F`, then N lines of F decimals;
//! * config: `key = value` lines using the training/augmentation field names;
//! * metrics: versioned JSON object; checkpoint: versioned JSON container
//!   of named arrays with shapes (f64 values round-trip exactly).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::nn::EncoderParams;
use crate::pipeline::{EpochRecord, TrainConfig};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn load_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let u = parts
            .next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| parse_err(path, lineno + 1, format!("bad edge line: {raw:?}")))?;
        let v = parts
            .next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| parse_err(path, lineno + 1, format!("bad edge line: {raw:?}")))?;
        if parts.next().is_some() {
            return Err(parse_err(path, lineno + 1, "expected exactly two ids"));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn save_edge_list(path: &Path, edges: &[(u32, u32)]) -> Result<()> {
    let mut out = String::new();
    for &(u, v) in edges {
        out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse::<u32>()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad label: {raw:?}")))?,
        );
    }
    Ok(labels)
}

pub fn save_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&format!("{l}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty feature file"))?;
    let mut parts = header.split_whitespace();
    let n: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, 1, "header must be `N F`"))?;
    let f: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, 1, "header must be `N F`"))?;
    let mut data = Vec::with_capacity(n * f);
    let mut rows = 0usize;
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0usize;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad value {tok:?}")))?;
            data.push(v);
            count += 1;
        }
        if count != f {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("expected {f} values, got {count}"),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, 1, format!("expected {n} rows, got {rows}")));
    }
    Matrix::from_vec(n, f, data)
}

pub fn save_features(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", m.rows(), m.cols()));
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    pub edges: usize,
    pub feature_dim: Option<usize>,
    pub classes: Option<usize>,
}

#[derive(Debug)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: Graph,
    pub summary: DatasetSummary,
}

/// Load a dataset from explicit paths. Node count comes from the label file
/// when present, else the feature header, else the maximum endpoint.
pub fn load_dataset_paths(
    name: &str,
    edges_path: &Path,
    features_path: Option<&Path>,
    labels_path: Option<&Path>,
) -> Result<DatasetBundle> {
    let edges = load_edge_list(edges_path)?;
    let features = features_path.map(load_features).transpose()?;
    let labels = labels_path.map(load_labels).transpose()?;
    let num_nodes = labels
        .as_ref()
        .map(|l| l.len())
        .or_else(|| features.as_ref().map(|f| f.rows()))
        .unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
    let graph = Graph::build(num_nodes, &edges, features, labels)?;
    let summary = DatasetSummary {
        nodes: graph.num_nodes(),
        edges: graph.num_edges(),
        feature_dim: graph.features().map(|f| f.cols()),
        classes: graph.num_classes(),
    };
    Ok(DatasetBundle {
        name: name.to_string(),
        graph,
        summary,
    })
}

/// Load `edges.txt` (+ optional `features.txt`, `labels.txt`) from a
/// directory; the directory name becomes the dataset name.
pub fn load_dataset_dir(dir: &Path) -> Result<DatasetBundle> {
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let edges = dir.join("edges.txt");
    let features = dir.join("features.txt");
    let labels = dir.join("labels.txt");
    load_dataset_paths(
        &name,
        &edges,
        features.exists().then_some(features.as_path()),
        labels.exists().then_some(labels.as_path()),
    )
}

/// Flat `key = value` config file; `dataset = <name>` selects the per-dataset
/// defaults first, remaining keys override individual fields.
pub fn parse_config_file(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, lineno + 1, "expected `key = value`"))?;
        map.insert(
            key.trim().to_string(),
            (lineno + 1, value.trim().to_string()),
        );
    }
    let mut cfg = match map.remove("dataset") {
        Some((lineno, name)) => TrainConfig::for_dataset(&name)
            .ok_or_else(|| parse_err(path, lineno, format!("unknown dataset {name:?}")))?,
        None => TrainConfig::default(),
    };
    for (key, (lineno, value)) in map {
        apply_config_key(&mut cfg, &key, &value).map_err(|msg| parse_err(path, lineno, msg))?;
    }
    Ok(cfg)
}

fn apply_config_key(
    cfg: &mut TrainConfig,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
        value
            .parse::<T>()
            .map_err(|_| format!("bad value for {key}: {value:?}"))
    }
    match key {
        "learning_rate" => cfg.learning_rate = num(key, value)?,
        "weight_decay" => cfg.weight_decay = num(key, value)?,
        "epochs" => cfg.epochs = num(key, value)?,
        "temperature" => cfg.temperature = num(key, value)?,
        "hidden_dim" => cfg.hidden_dim = num(key, value)?,
        "out_dim" => cfg.out_dim = num(key, value)?,
        "proj_dim" => cfg.proj_dim = num(key, value)?,
        "seed" => {
            cfg.seed = num(key, value)?;
            cfg.augmentation.seed = cfg.seed;
        }
        "p_drop_view1" => cfg.augmentation.p_drop_view1 = num(key, value)?,
        "p_drop_view2" => cfg.augmentation.p_drop_view2 = num(key, value)?,
        "p_add" => cfg.augmentation.p_add = Some(num(key, value)?),
        "p_tau" => cfg.augmentation.p_tau = num(key, value)?,
        "p_tau_prime" => cfg.augmentation.p_tau_prime = num(key, value)?,
        "p_f1" => cfg.augmentation.p_f1 = num(key, value)?,
        "p_f2" => cfg.augmentation.p_f2 = num(key, value)?,
        other => return Err(format!("unknown config key {other:?}")),
    }
    Ok(())
}

pub const METRICS_SCHEMA: &str = "epagcl-metrics/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
}

impl MetricsRecord {
    pub fn new(config: TrainConfig, epochs: Vec<EpochRecord>) -> Self {
        let final_loss = epochs.last().map(|e| e.loss);
        MetricsRecord {
            schema: METRICS_SCHEMA.to_string(),
            config,
            epochs,
            final_loss,
        }
    }
}

pub fn metrics_to_string(record: &MetricsRecord) -> Result<String> {
    Ok(serde_json::to_string_pretty(record)?)
}

/// Write the full metrics object; safe to call after every epoch (the file
/// is rewritten whole, so a longer history extends the `epochs` array).
pub fn emit_metrics(path: &Path, record: &MetricsRecord) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(metrics_to_string(record)?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub const CHECKPOINT_SCHEMA: &str = "epagcl-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointArray {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    schema: String,
    arrays: BTreeMap<String, CheckpointArray>,
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams) -> Result<()> {
    let mut arrays = BTreeMap::new();
    for (name, rows, cols, data) in params.blocks() {
        arrays.insert(
            name.to_string(),
            CheckpointArray {
                rows,
                cols,
                data: data.to_vec(),
            },
        );
    }
    let ckpt = Checkpoint {
        schema: CHECKPOINT_SCHEMA.to_string(),
        arrays,
    };
    fs::write(path, serde_json::to_string(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    if ckpt.schema != CHECKPOINT_SCHEMA {
        return Err(parse_err(
            path,
            1,
            format!("unsupported checkpoint schema {:?}", ckpt.schema),
        ));
    }
    let get = |name: &str| -> Result<&CheckpointArray> {
        ckpt.arrays
            .get(name)
            .ok_or_else(|| parse_err(path, 1, format!("checkpoint missing array {name:?}")))
    };
    let matrix = |name: &str| -> Result<Matrix> {
        let a = get(name)?;
        Matrix::from_vec(a.rows, a.cols, a.data.clone())
    };
    let vector = |name: &str| -> Result<Vec<f64>> { Ok(get(name)?.data.clone()) };
    Ok(EncoderParams {
        w1: matrix("w1")?,
        w2: matrix("w2")?,
        prelu_slopes: vector("prelu_slopes")?,
        proj_w1: matrix("proj_w1")?,
        proj_b1: vector("proj_b1")?,
        proj_w2: matrix("proj_w2")?,
        proj_b2: vector("proj_b2")?,
    })
}

/// Canonical save of a graph into a directory (edges/features/labels).
pub fn save_dataset_dir(
    dir: &Path,
    g: &Graph,
) -> Result<(PathBuf, Option<PathBuf>, Option<PathBuf>)> {
    fs::create_dir_all(dir)?;
    let edges_path = dir.join("edges.txt");
    save_edge_list(&edges_path, g.edges())?;
    let features_path = match g.features() {
        Some(f) => {
            let p = dir.join("features.txt");
            save_features(&p, f)?;
            Some(p)
        }
        None => None,
    };
    let labels_path = match g.labels() {
        Some(l) => {
            let p = dir.join("labels.txt");
            save_labels(&p, l)?;
            Some(p)
        }
        None => None,
    };
    Ok((edges_path, features_path, labels_path))
}
