//! Feature dumps, groupings, run manifests and the probe/eval split.
//!
//! A feature dump holds the activations of one layer for a set of samples,
//! their true labels and (optionally) the labels predicted by the analyzed
//! model. The binary layout is fixed and little-endian:
//!
//! ```text
//! "GFD1" | version u32 = 1 | n u32 | d u32 | N u32 | flags u8
//! features n*d f32 (row-major) | true labels n u32 | [predicted labels n u32]
//! ```
//!
//! Bit 0 of `flags` marks the presence of predicted labels. Optional
//! metadata (epoch, layer, split tag, class names) lives in a JSON sidecar
//! at `<dump path>.meta.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::ProbeConfigPatch;

pub const DUMP_MAGIC: [u8; 4] = *b"GFD1";
pub const DUMP_VERSION: u32 = 1;
pub const DUMP_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 1;
const FLAG_PREDICTED: u8 = 0b1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    ProbeTrain,
    ProbeEval,
    Validation,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::ProbeTrain => "probe_train",
            SplitTag::ProbeEval => "probe_eval",
            SplitTag::Validation => "validation",
        }
    }
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies which layer of which training epoch a dump was taken from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerEpochKey {
    pub epoch: u32,
    pub layer: String,
}

impl LayerEpochKey {
    pub fn new(epoch: u32, layer: impl Into<String>) -> Self {
        LayerEpochKey {
            epoch,
            layer: layer.into(),
        }
    }
}

impl std::fmt::Display for LayerEpochKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.epoch, self.layer)
    }
}

/// Contents of the `.meta.json` sidecar. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_tag: Option<SplitTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl DumpMeta {
    pub fn is_empty(&self) -> bool {
        self == &DumpMeta::default()
    }
}

/// Hidden-layer activations with true and (optionally) model-predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub features: Array2<f32>,
    pub true_labels: Vec<u32>,
    pub predicted_labels: Option<Vec<u32>>,
    pub num_classes: u32,
    pub meta: DumpMeta,
}

impl FeatureDataset {
    pub fn new(
        features: Array2<f32>,
        true_labels: Vec<u32>,
        predicted_labels: Option<Vec<u32>>,
        num_classes: u32,
    ) -> Result<Self> {
        let ds = FeatureDataset {
            features,
            true_labels,
            predicted_labels,
            num_classes,
            meta: DumpMeta::default(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_meta(mut self, meta: DumpMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn has_predictions(&self) -> bool {
        self.predicted_labels.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        let d = self.features.ncols();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.true_labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} true labels for {} samples",
                self.true_labels.len(),
                n
            )));
        }
        check_labels(&self.true_labels, self.num_classes)?;
        if let Some(pred) = &self.predicted_labels {
            if pred.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "{} predicted labels for {} samples",
                    pred.len(),
                    n
                )));
            }
            check_labels(pred, self.num_classes)?;
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at sample {}, dim {}",
                pos / d,
                pos % d
            )));
        }
        if let Some(names) = &self.meta.class_names {
            if names.len() != self.num_classes as usize {
                return Err(Error::InvalidDataset(format!(
                    "{} class names for {} classes",
                    names.len(),
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Copy of the samples at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureDataset {
        FeatureDataset {
            features: self.features.select(Axis(0), indices),
            true_labels: indices.iter().map(|&i| self.true_labels[i]).collect(),
            predicted_labels: self
                .predicted_labels
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
            num_classes: self.num_classes,
            meta: self.meta.clone(),
        }
    }

    /// Sample indices grouped by true class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes as usize];
        for (i, &y) in self.true_labels.iter().enumerate() {
            by_class[y as usize].push(i);
        }
        by_class
    }
}

fn check_labels(labels: &[u32], num_classes: u32) -> Result<()> {
    match labels.iter().position(|&l| l >= num_classes) {
        Some(index) => Err(Error::LabelOutOfRange {
            index,
            label: labels[index],
            num_classes,
        }),
        None => Ok(()),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Exact byte length of a dump with the given shape.
pub fn dump_len(n: usize, d: usize, with_predictions: bool) -> u64 {
    let n = n as u64;
    let labels = if with_predictions { 2 * n * 4 } else { n * 4 };
    DUMP_HEADER_LEN as u64 + n * d as u64 * 4 + labels
}

/// Serializes a dataset to the binary dump layout.
pub fn encode_feature_dump(dataset: &FeatureDataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let n = dataset.len();
    let d = dataset.feature_dim();
    let mut buf = Vec::with_capacity(dump_len(n, d, dataset.has_predictions()) as usize);
    buf.extend_from_slice(&DUMP_MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&dataset.num_classes.to_le_bytes());
    buf.push(if dataset.has_predictions() {
        FLAG_PREDICTED
    } else {
        0
    });
    for row in dataset.features.rows() {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for y in &dataset.true_labels {
        buf.extend_from_slice(&y.to_le_bytes());
    }
    if let Some(pred) = &dataset.predicted_labels {
        for y in pred {
            buf.extend_from_slice(&y.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Writes the dump and, when the dataset carries metadata, its sidecar.
/// Invalid datasets are rejected before anything is written.
pub fn write_feature_dump(dataset: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_feature_dump(dataset)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;

    let meta_path = sidecar_path(path);
    if dataset.meta.is_empty() {
        if meta_path.exists() {
            fs::remove_file(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        }
    } else {
        let json = serde_json::to_vec_pretty(&dataset.meta).expect("metadata serializes");
        fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    }
    Ok(())
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

/// Parses a dump from memory. `path` is only used in diagnostics.
pub fn decode_feature_dump(bytes: &[u8], path: &Path) -> Result<FeatureDataset> {
    let actual = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: DUMP_HEADER_LEN as u64,
            actual,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != DUMP_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
        });
    }
    if bytes.len() < DUMP_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: DUMP_HEADER_LEN as u64,
            actual,
        });
    }
    let version = read_u32(bytes, 4);
    if version != DUMP_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            version,
        });
    }
    let n = read_u32(bytes, 8) as usize;
    let d = read_u32(bytes, 12) as usize;
    let num_classes = read_u32(bytes, 16);
    let flags = bytes[20];
    let with_pred = flags & FLAG_PREDICTED != 0;

    let expected = dump_len(n, d, with_pred);
    if actual < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::TrailingBytes {
            path: path.into(),
            extra: actual - expected,
        });
    }

    let mut offset = DUMP_HEADER_LEN;
    let features: Vec<f32> = bytes[offset..offset + n * d * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    offset += n * d * 4;
    let read_labels = |offset: usize| -> Vec<u32> {
        bytes[offset..offset + n * 4]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let true_labels = read_labels(offset);
    offset += n * 4;
    let predicted_labels = with_pred.then(|| read_labels(offset));

    let features = Array2::from_shape_vec((n, d), features).expect("shape checked above");
    FeatureDataset::new(features, true_labels, predicted_labels, num_classes)
}

/// Reads a dump and its sidecar (if present).
pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut ds = decode_feature_dump(&bytes, path)?;
    let meta_path = sidecar_path(path);
    if meta_path.exists() {
        let text = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        ds.meta = serde_json::from_slice(&text).map_err(|e| Error::parse(&meta_path, e))?;
        ds.validate()?;
    }
    Ok(ds)
}

/// Output of [`split_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub probe_train: FeatureDataset,
    pub probe_eval: FeatureDataset,
    /// Classes with fewer than two samples; these went entirely to `probe_train`.
    pub undersized_classes: Vec<u32>,
}

/// Per-class sample counts assigned to the first part of a stratified split.
///
/// Each class receives either the floor or the ceiling of its ideal share,
/// and the total equals `ceil(fraction * n)` (largest-remainder apportionment,
/// ties by class index). Classes listed in `forced` get all their samples.
pub(crate) fn stratified_counts(class_sizes: &[usize], fraction: f64, forced: &[bool]) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    // Tolerance absorbs products like 0.7 * 10 = 7.000000000000001.
    let target = (fraction * n as f64 - 1e-9).ceil() as usize;
    let mut counts: Vec<usize> = class_sizes
        .iter()
        .zip(forced)
        .map(|(&size, &f)| {
            if f {
                size
            } else {
                (fraction * size as f64 + 1e-9).floor() as usize
            }
        })
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut extra = target.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..class_sizes.len())
        .filter(|&c| !forced[c] && counts[c] < class_sizes[c])
        .collect();
    let remainder = |c: usize| fraction * class_sizes[c] as f64 - counts[c] as f64;
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
    for c in order {
        if extra == 0 {
            break;
        }
        counts[c] += 1;
        extra -= 1;
    }
    counts
}

/// Stratified, seeded split into probe-training and probe-evaluation parts.
pub fn split_dataset(dataset: &FeatureDataset, probe_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(probe_fraction > 0.0 && probe_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probe_fraction must lie in (0, 1), got {probe_fraction}"
        )));
    }
    let by_class = dataset.indices_by_class();
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let forced: Vec<bool> = sizes.iter().map(|&s| s == 1).collect();
    let undersized_classes: Vec<u32> = (0..sizes.len() as u32).filter(|&c| forced[c as usize]).collect();
    for &c in &undersized_classes {
        log::warn!("class {c} has fewer than 2 samples; assigning it entirely to probe_train");
    }
    let counts = stratified_counts(&sizes, probe_fraction, &forced);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut eval_idx = Vec::new();
    for (members, &take) in by_class.iter().zip(&counts) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        train_idx.extend_from_slice(&shuffled[..take]);
        eval_idx.extend_from_slice(&shuffled[take..]);
    }
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    if eval_idx.is_empty() {
        return Err(Error::InvalidArgument(
            "split leaves no samples for probe_eval".into(),
        ));
    }

    let mut probe_train = dataset.select(&train_idx);
    probe_train.meta.split_tag = Some(SplitTag::ProbeTrain);
    let mut probe_eval = dataset.select(&eval_idx);
    probe_eval.meta.split_tag = Some(SplitTag::ProbeEval);
    Ok(DatasetSplit {
        probe_train,
        probe_eval,
        undersized_classes,
    })
}

/// Class-to-group assignment, either from a concept file or a random baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub name: String,
    pub groups: Vec<String>,
    pub membership: Vec<usize>,
}

impl GroupAssignment {
    pub fn new(name: impl Into<String>, groups: Vec<String>, membership: Vec<usize>) -> Result<Self> {
        let ga = GroupAssignment {
            name: name.into(),
            groups,
            membership,
        };
        ga.validate()?;
        Ok(ga)
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_classes(&self) -> usize {
        self.membership.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.groups.len()];
        for &g in &self.membership {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&c| self.membership[c] == group)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "grouping {:?} has no groups",
                self.name
            )));
        }
        if let Some(&g) = self.membership.iter().find(|&&g| g >= self.groups.len()) {
            return Err(Error::InvalidArgument(format!(
                "grouping {:?}: group index {g} out of range",
                self.name
            )));
        }
        if let Some(g) = self.group_sizes().iter().position(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "grouping {:?}: group {:?} is empty",
                self.name, self.groups[g]
            )));
        }
        Ok(())
    }
}

/// How the `class` column of a grouping file is resolved.
#[derive(Debug, Clone, Copy)]
pub enum ClassSpace<'a> {
    Count(usize),
    Names(&'a [String]),
}

impl ClassSpace<'_> {
    pub fn len(&self) -> usize {
        match self {
            ClassSpace::Count(n) => *n,
            ClassSpace::Names(names) => names.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Resolves a class given by index or (when names are known) by name.
    pub fn resolve(&self, token: &str) -> Option<usize> {
        let token = token.trim();
        if let ClassSpace::Names(names) = self {
            if let Some(i) = names.iter().position(|n| n == token) {
                return Some(i);
            }
        }
        token.parse::<usize>().ok().filter(|&i| i < self.len())
    }

    pub fn label(&self, class: usize) -> String {
        match self {
            ClassSpace::Names(names) => names[class].clone(),
            ClassSpace::Count(_) => class.to_string(),
        }
    }
}

/// Parses a `class,group` CSV. Groups are numbered in order of first appearance.
pub fn parse_grouping(text: &str, name: &str, classes: ClassSpace<'_>) -> Result<GroupAssignment> {
    let src = PathBuf::from(name);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(&src, e))?.clone();
    if headers.len() != 2 || &headers[0] != "class" || &headers[1] != "group" {
        return Err(Error::parse(&src, "expected header `class,group`"));
    }
    let mut groups: Vec<String> = Vec::new();
    let mut group_index: HashMap<String, usize> = HashMap::new();
    let mut membership: Vec<Option<usize>> = vec![None; classes.len()];
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(&src, e))?;
        let class = classes
            .resolve(&record[0])
            .ok_or_else(|| Error::UnknownClass(record[0].to_string()))?;
        if membership[class].is_some() {
            return Err(Error::DuplicateClass(classes.label(class)));
        }
        let group = record[1].to_string();
        let g = *group_index.entry(group.clone()).or_insert_with(|| {
            groups.push(group);
            groups.len() - 1
        });
        membership[class] = Some(g);
    }
    let membership = membership
        .into_iter()
        .enumerate()
        .map(|(c, g)| g.ok_or_else(|| Error::MissingClass(classes.label(c))))
        .collect::<Result<Vec<_>>>()?;
    GroupAssignment::new(name, groups, membership)
}

/// Reads a grouping file; the grouping is named after the file stem.
pub fn read_grouping(path: impl AsRef<Path>, classes: ClassSpace<'_>) -> Result<GroupAssignment> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_grouping(&text, &name, classes)
}

pub fn write_grouping(grouping: &GroupAssignment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("class,group\n");
    for (c, &g) in grouping.membership.iter().enumerate() {
        out.push_str(&format!("{c},{}\n", grouping.groups[g]));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One (epoch, layer) unit of work in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub epoch: u32,
    pub layer: String,
    pub probe_train: PathBuf,
    pub probe_eval: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn key(&self) -> LayerEpochKey {
        LayerEpochKey::new(self.epoch, self.layer.clone())
    }

    pub fn dumps(&self) -> Vec<(SplitTag, &Path)> {
        let mut out = vec![
            (SplitTag::ProbeTrain, self.probe_train.as_path()),
            (SplitTag::ProbeEval, self.probe_eval.as_path()),
        ];
        if let Some(v) = &self.validation {
            out.push((SplitTag::Validation, v.as_path()));
        }
        out
    }
}

/// Graph export settings for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSettings {
    pub dir: PathBuf,
    #[serde(default = "default_export_formats")]
    pub formats: Vec<String>,
    /// Edge fraction removed before export; metrics always use the full graph.
    #[serde(default)]
    pub prune_fraction: f64,
}

fn default_export_formats() -> Vec<String> {
    vec!["gexf".into()]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_k() -> usize {
    5
}

/// Community-detection settings used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LouvainSettings {
    #[serde(default = "LouvainSettings::default_min_gain")]
    pub min_gain: f64,
    #[serde(default = "LouvainSettings::default_max_passes")]
    pub max_passes: usize,
}

impl LouvainSettings {
    fn default_min_gain() -> f64 {
        1e-9
    }
    fn default_max_passes() -> usize {
        50
    }
}

impl Default for LouvainSettings {
    fn default() -> Self {
        LouvainSettings {
            min_gain: Self::default_min_gain(),
            max_passes: Self::default_max_passes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub groupings: Vec<PathBuf>,
    /// Probe settings: the `"*"` key applies to every layer, other keys to
    /// the named layer only (layered on top of `"*"`).
    #[serde(default)]
    pub probe_hyperparams: BTreeMap<String, ProbeConfigPatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub louvain: LouvainSettings,
    /// Initialize each probe from the previous epoch's probe of the same layer.
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export: Option<ExportSettings>,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Manifest("no entries".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Manifest("at least one seed is required".into()));
        }
        if self.lambdas.is_empty() {
            return Err(Error::Manifest("at least one lambda is required".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Manifest(format!("lambda {l} outside [0, 1]")));
        }
        if self.k == 0 {
            return Err(Error::Manifest("k must be at least 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if e.layer.is_empty() {
                return Err(Error::Manifest(format!(
                    "entry for epoch {} has an empty layer",
                    e.epoch
                )));
            }
            if !seen.insert(e.key()) {
                return Err(Error::Manifest(format!("duplicate entry {}", e.key())));
            }
        }
        if let Some(ex) = &self.export {
            if !(0.0..=1.0).contains(&ex.prune_fraction) {
                return Err(Error::Manifest(format!(
                    "export prune_fraction {} outside [0, 1]",
                    ex.prune_fraction
                )));
            }
        }
        Ok(())
    }

    pub fn min_lambda(&self) -> f64 {
        self.lambdas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rewrites relative paths as relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for e in &mut self.entries {
            fix(&mut e.probe_train);
            fix(&mut e.probe_eval);
            if let Some(v) = &mut e.validation {
                fix(v);
            }
        }
        self.groupings.iter_mut().for_each(fix);
        if let Some(ex) = &mut self.export {
            fix(&mut ex.dir);
        }
    }
}

/// Loads a manifest, resolving relative paths against its directory.
/// Returns the manifest and the raw bytes (for hashing).
pub fn read_manifest(path: impl AsRef<Path>) -> Result<(RunManifest, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: RunManifest = serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e))?;
    manifest.validate()?;
    if let Some(base) = path.parent() {
        manifest.resolve_paths(base);
    }
    Ok((manifest, bytes))
}

pub fn write_manifest(manifest: &RunManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}
