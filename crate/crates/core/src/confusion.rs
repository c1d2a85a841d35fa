//! Confusion matrices and the zero-diagonal confusion graphs derived from them.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{LayerEpochKey, SplitTag};
use crate::error::{Error, Result};

/// Raw counts and their row-normalized form. Rows are true classes,
/// columns predicted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Array2<u64>,
    pub normalized: Array2<f64>,
    pub empty_rows: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }
}

pub fn build_confusion_matrix(y_true: &[u32], y_pred: &[u32], num_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyConfusion);
    }
    let mut counts = Array2::<u64>::zeros((num_classes, num_classes));
    for (i, (&s, &t)) in y_true.iter().zip(y_pred).enumerate() {
        for label in [s, t] {
            if label as usize >= num_classes {
                return Err(Error::LabelOutOfRange {
                    index: i,
                    label,
                    num_classes: num_classes as u32,
                });
            }
        }
        counts[[s as usize, t as usize]] += 1;
    }
    Ok(from_counts(counts))
}

/// Normalizes each nonzero row of `counts` to sum to one.
pub fn from_counts(counts: Array2<u64>) -> ConfusionMatrix {
    let n = counts.nrows();
    let mut normalized = Array2::<f64>::zeros((n, n));
    let mut empty_rows = Vec::new();
    for s in 0..n {
        let row_sum: u64 = counts.row(s).sum();
        if row_sum == 0 {
            empty_rows.push(s);
            continue;
        }
        for t in 0..n {
            normalized[[s, t]] = counts[[s, t]] as f64 / row_sum as f64;
        }
    }
    if !empty_rows.is_empty() {
        log::warn!("confusion matrix has classes without samples: {empty_rows:?}");
    }
    ConfusionMatrix {
        counts,
        normalized,
        empty_rows,
    }
}

/// Micro accuracy over raw counts.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    let correct: u64 = cm.counts.diag().sum();
    Ok(correct as f64 / total as f64)
}

/// Fraction of exactly-zero entries.
pub fn sparsity(matrix: &Array2<f64>) -> f64 {
    let zeros = matrix.iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / matrix.len() as f64
}

/// Provenance and processing flags carried alongside a graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<LayerEpochKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_tag: Option<SplitTag>,
    /// Edges were removed for plotting; metrics on this graph are not representative.
    #[serde(default)]
    pub pruned: bool,
    /// Nodes are communities of another graph (self-loops allowed).
    #[serde(default)]
    pub aggregated: bool,
    /// For subgraphs: original node index of each node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_map: Option<Vec<usize>>,
}

/// Directed weighted graph over classes; `adjacency[[i, j]]` is the rate at
/// which class `i` is predicted as class `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionGraph {
    pub adjacency: Array2<f64>,
    pub node_names: Option<Vec<String>>,
    pub meta: GraphMeta,
}

impl ConfusionGraph {
    pub fn new(adjacency: Array2<f64>, node_names: Option<Vec<String>>) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::DimensionMismatch("adjacency must be square".into()));
        }
        if let Some(names) = &node_names {
            if names.len() != adjacency.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} node names for {} nodes",
                    names.len(),
                    adjacency.nrows()
                )));
            }
        }
        if adjacency.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "edge weights must be finite and nonnegative".into(),
            ));
        }
        Ok(ConfusionGraph {
            adjacency,
            node_names,
            meta: GraphMeta::default(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn total_weight(&self) -> f64 {
        self.adjacency.sum()
    }

    pub fn node_label(&self, i: usize) -> String {
        match &self.node_names {
            Some(names) => names[i].clone(),
            None => i.to_string(),
        }
    }

    /// Nonzero edges as (source, target, weight) in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.adjacency
            .indexed_iter()
            .filter(|(_, &w)| w != 0.0)
            .map(|((i, j), &w)| (i, j, w))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().filter(|&&w| w != 0.0).count()
    }

    pub(crate) fn warn_if_pruned(&self, what: &str) {
        if self.meta.pruned {
            log::warn!("{what} computed on a pruned graph; pruning is meant for plotting only");
        }
    }
}

/// Drops the diagonal (correct predictions) of a confusion matrix.
pub fn to_confusion_graph(
    cm: &ConfusionMatrix,
    key: Option<LayerEpochKey>,
    lambda: Option<f64>,
    split_tag: Option<SplitTag>,
    names: Option<Vec<String>>,
) -> Result<ConfusionGraph> {
    let mut adjacency = cm.normalized.clone();
    for i in 0..adjacency.nrows() {
        adjacency[[i, i]] = 0.0;
    }
    let mut graph = ConfusionGraph::new(adjacency, names)?;
    graph.meta.key = key;
    graph.meta.lambda = lambda;
    graph.meta.split_tag = split_tag;
    Ok(graph)
}

fn csv_err(path: &Path, e: impl ToString) -> Error {
    Error::parse(path, e)
}

/// Writes the normalized matrix as CSV with a header row of class names.
pub fn write_matrix_csv(
    matrix: &Array2<f64>,
    names: Option<&[String]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_csv_string(matrix, names)).map_err(|e| Error::io(path, e))
}

pub fn matrix_csv_string(matrix: &Array2<f64>, names: Option<&[String]>) -> String {
    let n = matrix.nrows();
    let header: Vec<String> = match names {
        Some(names) => names.to_vec(),
        None => (0..n).map(|i| i.to_string()).collect(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in matrix.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Reads a square matrix CSV written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(Array2<f64>, Vec<String>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path)
}

pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let names: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let n = names.len();
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != n {
            return Err(csv_err(
                path,
                format!("row {rows} has {} columns, expected {n}", rec.len()),
            ));
        }
        for v in rec.iter() {
            values.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| csv_err(path, format!("{v:?}: {e}")))?,
            );
        }
        rows += 1;
    }
    if rows != n {
        return Err(csv_err(path, format!("{rows} rows for {n} columns")));
    }
    Ok((Array2::from_shape_vec((n, n), values).expect("sized"), names))
}
