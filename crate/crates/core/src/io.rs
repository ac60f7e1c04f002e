//! Dataset file formats and report emission.
//!
//! A dataset is a bundle of up to four plain-text files sharing a base path:
//!
//! * `<base>.hgr` - structure, hMETIS style: a `M N` header line, then M
//!   lines of whitespace-separated 1-indexed member node ids.
//! * `<base>.features.csv` - one comma-separated row of feature values per
//!   node, printed with the shortest exact decimal representation.
//! * `<base>.labels.txt` - one integer per node, `-1` for unlabeled; omitted
//!   entirely for label-free graphs.
//! * `<base>.split.txt` - one of `train`, `val`, `test`, `none` per node;
//!   omitted when no node belongs to any split.
//!
//! Writing then parsing reproduces the graph exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::experiment::ExperimentReport;
use crate::hypergraph::{Hypergraph, Incidence, Masks, Violation};
use crate::numeric::DenseMatrix;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{what} count mismatch: expected {expected}, found {actual}")]
    CrossFileCountMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("dataset failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("report contains a non-finite value in {field}")]
    NonFiniteValue { field: String },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The four file paths of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub structure: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
}

impl DatasetPaths {
    /// Derive all four paths from a base path (no extension).
    pub fn from_base(base: impl AsRef<Path>) -> Self {
        let base = base.as_ref();
        let with = |suffix: &str| {
            let mut os = base.as_os_str().to_os_string();
            os.push(suffix);
            PathBuf::from(os)
        };
        Self {
            structure: with(".hgr"),
            features: with(".features.csv"),
            labels: with(".labels.txt"),
            split: with(".split.txt"),
        }
    }
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read_structure(path: &Path) -> Result<Incidence, IoError> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing 'M N' header"))?;
    let mut tokens = header.split_whitespace();
    let m: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_error(path, 1, "header must be 'M N'"))?;
    let n: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_error(path, 1, "header must be 'M N'"))?;
    if tokens.next().is_some() {
        return Err(parse_error(path, 1, "header must be exactly 'M N'"));
    }

    let mut edges = Vec::with_capacity(m);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if edges.len() == m {
            if !line.trim().is_empty() {
                return Err(parse_error(path, line_no, "trailing content after M hyperedges"));
            }
            continue;
        }
        let mut members = Vec::new();
        for token in line.split_whitespace() {
            let id: usize = token
                .parse()
                .map_err(|_| parse_error(path, line_no, format!("invalid node id '{token}'")))?;
            if id == 0 || id > n {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("node id {id} outside 1..={n}"),
                ));
            }
            members.push(id - 1);
        }
        if members.is_empty() {
            return Err(parse_error(path, line_no, "empty hyperedge"));
        }
        edges.push(members);
    }
    if edges.len() != m {
        return Err(IoError::CrossFileCountMismatch {
            what: "hyperedge",
            expected: m,
            actual: edges.len(),
        });
    }
    Incidence::build(&edges, n)
        .map_err(|e| parse_error(path, 1, format!("inconsistent structure: {e}")))
}

fn read_features(path: &Path, num_nodes: usize) -> Result<DenseMatrix, IoError> {
    let text = read_file(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_error(path, line_no, format!("invalid value '{t}'")))
            })
            .collect::<Result<_, _>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_error(path, line_no, "non-finite feature value"));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("row has {} columns, expected {w}", row.len()),
                ));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.len() != num_nodes {
        return Err(IoError::CrossFileCountMismatch {
            what: "feature row",
            expected: num_nodes,
            actual: rows.len(),
        });
    }
    DenseMatrix::from_rows(&rows).map_err(|e| parse_error(path, 1, e.to_string()))
}

fn read_labels(path: &Path, num_nodes: usize) -> Result<(Vec<Option<usize>>, usize), IoError> {
    if !path.exists() {
        return Ok((vec![None; num_nodes], 0));
    }
    let text = read_file(path)?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let value: i64 = token
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid label '{token}'")))?;
        match value {
            -1 => labels.push(None),
            v if v >= 0 => labels.push(Some(v as usize)),
            v => {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("label {v} must be -1 or a class index"),
                ));
            }
        }
    }
    if labels.len() != num_nodes {
        return Err(IoError::CrossFileCountMismatch {
            what: "label",
            expected: num_nodes,
            actual: labels.len(),
        });
    }
    let num_classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);
    Ok((labels, num_classes))
}

fn read_split(path: &Path, num_nodes: usize) -> Result<Masks, IoError> {
    if !path.exists() {
        return Ok(Masks::empty(num_nodes));
    }
    let text = read_file(path)?;
    let mut masks = Masks::empty(num_nodes);
    let mut count = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        if count >= num_nodes {
            return Err(parse_error(path, line_no, "more split tokens than nodes"));
        }
        match token {
            "train" => masks.train[count] = true,
            "val" => masks.val[count] = true,
            "test" => masks.test[count] = true,
            "none" => {}
            other => {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("unknown split token '{other}'"),
                ));
            }
        }
        count += 1;
    }
    if count != num_nodes {
        return Err(IoError::CrossFileCountMismatch {
            what: "split token",
            expected: num_nodes,
            actual: count,
        });
    }
    Ok(masks)
}

/// Load a dataset bundle into a validated hypergraph. Node and hyperedge
/// order follow file order.
pub fn parse_dataset(paths: &DatasetPaths) -> Result<Hypergraph, IoError> {
    let incidence = read_structure(&paths.structure)?;
    let n = incidence.num_nodes();
    let features = read_features(&paths.features, n)?;
    let (labels, num_classes) = read_labels(&paths.labels, n)?;
    let masks = read_split(&paths.split, n)?;
    let graph = Hypergraph {
        incidence,
        features,
        labels,
        num_classes,
        masks,
    };
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(IoError::Validation(violations));
    }
    Ok(graph)
}

fn remove_if_present(path: &Path) -> Result<(), IoError> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(e.into()),
    }
}

/// Write a dataset bundle. Label and split files are omitted (and any stale
/// copies removed) when the graph carries no labels or no masks.
pub fn write_dataset(graph: &Hypergraph, paths: &DatasetPaths) -> Result<(), IoError> {
    if let Some(parent) = paths.structure.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }

    let mut structure = String::new();
    let _ = writeln!(
        structure,
        "{} {}",
        graph.num_hyperedges(),
        graph.num_nodes()
    );
    for members in graph.incidence.edges() {
        let line: Vec<String> = members.iter().map(|v| (v + 1).to_string()).collect();
        let _ = writeln!(structure, "{}", line.join(" "));
    }
    fs::write(&paths.structure, structure)?;

    let mut features = String::new();
    for i in 0..graph.num_nodes() {
        let row: Vec<String> = graph.features.row(i).iter().map(f64::to_string).collect();
        let _ = writeln!(features, "{}", row.join(","));
    }
    fs::write(&paths.features, features)?;

    if graph.labels.iter().any(Option::is_some) {
        let mut labels = String::new();
        for label in &graph.labels {
            let _ = writeln!(labels, "{}", label.map_or(-1, |c| c as i64));
        }
        fs::write(&paths.labels, labels)?;
    } else {
        remove_if_present(&paths.labels)?;
    }

    if !graph.masks.is_empty() {
        let mut split = String::new();
        for v in 0..graph.num_nodes() {
            let token = if graph.masks.train[v] {
                "train"
            } else if graph.masks.val[v] {
                "val"
            } else if graph.masks.test[v] {
                "test"
            } else {
                "none"
            };
            let _ = writeln!(split, "{token}");
        }
        fs::write(&paths.split, split)?;
    } else {
        remove_if_present(&paths.split)?;
    }
    Ok(())
}

/// Serialize any value as pretty JSON with a trailing newline.
pub fn write_json(value: &impl Serialize, path: &Path) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Write an experiment report, rejecting non-finite values outright.
pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<(), IoError> {
    report
        .validate_finite()
        .map_err(|field| IoError::NonFiniteValue { field })?;
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport, IoError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
