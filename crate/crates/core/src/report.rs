//! Metrics report: the JSON document produced by a pipeline run, plus
//! plain-text rendering helpers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confusion::ConfusionGraph;
use crate::dataset::{LayerEpochKey, SplitTag};
use crate::error::{Error, Result};
use crate::netsci::{
    interpret_assortativity, interpret_modularity, AssortativityCategory, ModularityCategory,
};
use crate::probe::{StopReason, TrainingTrace};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Row key: `epoch/layer/lambda/seed/split`.
pub fn row_key(key: &LayerEpochKey, lambda: f64, seed: u64, split: SplitTag) -> String {
    format!(
        "{}/{}/{}/{}/{}",
        key.epoch,
        key.layer,
        lambda,
        seed,
        split.as_str()
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedClass {
    pub class: usize,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitySummary {
    pub modularity: f64,
    pub num_communities: usize,
    pub category: ModularityCategory,
    pub membership: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssortativitySummary {
    pub grouping: String,
    /// `None` when the association matrix is degenerate.
    pub r: Option<f64>,
    pub category: Option<AssortativityCategory>,
    /// r for a random grouping with the same group sizes.
    pub random_baseline_r: Option<f64>,
    /// Q of the grouping's partition on the same graph.
    pub modularity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub final_train_loss: f64,
    pub best_val_loss: Option<f64>,
}

impl TraceSummary {
    pub fn from_trace(trace: &TrainingTrace) -> Self {
        TraceSummary {
            epochs_run: trace.train_loss.len(),
            best_epoch: trace.best_epoch,
            stop_reason: trace.stop_reason,
            final_train_loss: trace.train_loss.last().copied().unwrap_or(f64::NAN),
            best_val_loss: trace.val_loss.get(trace.best_epoch).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub epoch: u32,
    pub layer: String,
    pub lambda: f64,
    pub seed: u64,
    pub split: SplitTag,
    pub num_samples: usize,
    pub accuracy: f64,
    /// Agreement with the analyzed model's predictions, when available.
    pub model_agreement: Option<f64>,
    pub cm_sparsity: f64,
    pub graph_sparsity: f64,
    pub num_edges: usize,
    pub total_weight: f64,
    /// `None` when the graph has no edges.
    pub communities: Option<CommunitySummary>,
    pub assortativity: Vec<AssortativitySummary>,
    pub hubs: Vec<RankedClass>,
    pub hardest: Vec<RankedClass>,
    pub easiest: Vec<RankedClass>,
    pub trace: TraceSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricsRow {
    pub fn key(&self) -> String {
        row_key(
            &LayerEpochKey::new(self.epoch, self.layer.clone()),
            self.lambda,
            self.seed,
            self.split,
        )
    }
}

/// Q statistics across seeds for one (epoch, layer, lambda, split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSummary {
    pub epoch: u32,
    pub layer: String,
    pub lambda: f64,
    pub split: SplitTag,
    pub num_seeds: usize,
    pub modularity_mean: Option<f64>,
    /// Population standard deviation.
    pub modularity_std: Option<f64>,
    pub accuracy_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryFailure {
    pub epoch: u32,
    pub layer: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub format_version: u32,
    pub tool_version: String,
    /// SHA-256 of the manifest bytes, lowercase hex.
    pub manifest_sha256: String,
    pub rows: BTreeMap<String, MetricsRow>,
    pub seed_summaries: Vec<SeedSummary>,
    pub failures: Vec<EntryFailure>,
    /// Wall-clock seconds per stage, summed over entries. Not reproducible.
    pub timings: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    /// Structural checks: row keys match their contents and categories agree
    /// with the interpretation bands.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (key, row) in &self.rows {
            if *key != row.key() {
                return bad(format!("row key {key:?} does not match row {:?}", row.key()));
            }
            if !(0.0..=1.0).contains(&row.accuracy) {
                return bad(format!("{key}: accuracy {} outside [0, 1]", row.accuracy));
            }
            if let Some(c) = &row.communities {
                if c.category != interpret_modularity(c.modularity) {
                    return bad(format!("{key}: modularity category mismatch"));
                }
            }
            for a in &row.assortativity {
                if a.r.map(interpret_assortativity) != a.category {
                    return bad(format!(
                        "{key}: assortativity category mismatch for {}",
                        a.grouping
                    ));
                }
            }
        }
        Ok(())
    }

    /// Copy with wall-clock fields cleared, for reproducibility comparisons.
    pub fn without_timings(&self) -> MetricsReport {
        MetricsReport {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = report.to_json();
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let report: MetricsReport = serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e))?;
    report.validate()?;
    Ok(report)
}

/// `0.7026` -> `"70.26%"`.
pub fn format_percent(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Attaches node labels to `(class, value)` rankings.
pub fn ranked_classes(graph: &ConfusionGraph, list: &[(usize, f64)]) -> Vec<RankedClass> {
    list.iter()
        .map(|&(class, value)| RankedClass {
            class,
            name: graph.node_label(class),
            value,
        })
        .collect()
}

/// Comma-separated class names in rank order.
pub fn format_class_list(classes: &[RankedClass]) -> String {
    classes
        .iter()
        .map(|c| c.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.4}"))
}

/// Human-readable summary of a report.
pub fn render_report(report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "confgraph {} report (manifest {})",
        report.tool_version, report.manifest_sha256
    );
    for (key, row) in &report.rows {
        let _ = writeln!(s, "\n[{key}] n={}", row.num_samples);
        let _ = writeln!(s, "  accuracy      {}", format_percent(row.accuracy));
        if let Some(a) = row.model_agreement {
            let _ = writeln!(s, "  agreement     {}", format_percent(a));
        }
        let _ = writeln!(
            s,
            "  sparsity      cm {} / graph {}",
            format_percent(row.cm_sparsity),
            format_percent(row.graph_sparsity)
        );
        match &row.communities {
            Some(c) => {
                let _ = writeln!(
                    s,
                    "  modularity    {:.4} ({}, {} communities)",
                    c.modularity, c.category, c.num_communities
                );
            }
            None => {
                let _ = writeln!(s, "  modularity    - (no confusions)");
            }
        }
        for a in &row.assortativity {
            let cat = a.category.map_or("degenerate".to_string(), |c| c.to_string());
            let _ = writeln!(
                s,
                "  assortativity {} r={} ({cat}), random r={}",
                a.grouping,
                opt(a.r),
                opt(a.random_baseline_r)
            );
        }
        let _ = writeln!(s, "  hubs          {}", format_class_list(&row.hubs));
        let _ = writeln!(s, "  hardest       {}", format_class_list(&row.hardest));
        let _ = writeln!(s, "  easiest       {}", format_class_list(&row.easiest));
        let _ = writeln!(
            s,
            "  probe         {} epochs, stop {}, loss {:.4}",
            row.trace.epochs_run, row.trace.stop_reason, row.trace.final_train_loss
        );
        for n in &row.notes {
            let _ = writeln!(s, "  note          {n}");
        }
    }
    if !report.seed_summaries.is_empty() {
        let _ = writeln!(s, "\nacross seeds:");
        for m in &report.seed_summaries {
            let _ = writeln!(
                s,
                "  {}/{}/{}/{}: Q mean {} std {} over {} seeds, accuracy {}",
                m.epoch,
                m.layer,
                m.lambda,
                m.split.as_str(),
                opt(m.modularity_mean),
                opt(m.modularity_std),
                m.num_seeds,
                format_percent(m.accuracy_mean)
            );
        }
    }
    for f in &report.failures {
        let _ = writeln!(s, "\nFAILED {}/{}: {} ({})", f.epoch, f.layer, f.message, f.kind);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(names: &[&str]) -> Vec<RankedClass> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| RankedClass {
                class: i,
                name: n.to_string(),
                value: 1.0 - i as f64 * 0.1,
            })
            .collect()
    }

    #[test]
    fn percent() {
        assert_eq!(format_percent(0.7026), "70.26%");
        assert_eq!(format_percent(1.0), "100.00%");
        assert_eq!(format_percent(0.0), "0.00%");
    }

    #[test]
    fn class_lists() {
        assert_eq!(
            format_class_list(&ranked(&["computer keyboard", "sea", "possum"])),
            "computer keyboard, sea, possum"
        );
        assert_eq!(format_class_list(&[]), "");
    }

    #[test]
    fn keys() {
        let k = LayerEpochKey::new(3, "layer4");
        assert_eq!(
            row_key(&k, 0.0, 7, SplitTag::Validation),
            "3/layer4/0/7/validation"
        );
        assert_eq!(
            row_key(&k, 0.25, 0, SplitTag::ProbeEval),
            "3/layer4/0.25/0/probe_eval"
        );
    }
}
