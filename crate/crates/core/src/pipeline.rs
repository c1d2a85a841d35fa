//! Manifest-driven analysis runs.
//!
//! Every manifest entry is an independent work unit, except that with
//! `warm_start` the entries of one layer form a chain ordered by epoch.
//! Units run on a bounded thread pool; the report is assembled in manifest
//! order afterwards so its content does not depend on scheduling.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::confusion::{accuracy, build_confusion_matrix, sparsity, to_confusion_graph};
use crate::dataset::{
    read_feature_dump, read_grouping, ClassSpace, FeatureDataset, GroupAssignment, ManifestEntry,
    RunManifest, SplitTag,
};
use crate::error::{Error, Result};
use crate::graphops::{export_graph, prune_edges, ExportFormat, NodeAttributes};
use crate::netsci::{
    association_matrix, assortativity, detect_communities, difficulty_ranking, hubs, interpret_modularity,
    modularity, random_grouping, CommunityPartition,
};
use crate::probe::{predict, train_probe_from, LinearProbe, ProbeConfig, TrainingTrace};
use crate::report::{
    ranked_classes, row_key, AssortativitySummary, CommunitySummary, EntryFailure, MetricsReport, MetricsRow,
    SeedSummary, TraceSummary, REPORT_FORMAT_VERSION,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineOptions {
    /// Maximum concurrent work units; 0 uses the rayon default.
    pub jobs: usize,
}

pub fn manifest_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Probe settings for `layer`: defaults, then the `"*"` patch, then the
/// layer's own patch.
pub fn resolve_probe_config(manifest: &RunManifest, layer: &str) -> ProbeConfig {
    let mut config = ProbeConfig::default();
    if let Some(p) = manifest.probe_hyperparams.get("*") {
        p.apply(&mut config);
    }
    if let Some(p) = manifest.probe_hyperparams.get(layer) {
        p.apply(&mut config);
    }
    config
}

type Timings = BTreeMap<String, f64>;
type ProbeKey = (u64, u64);

struct EntryOutput {
    rows: Vec<MetricsRow>,
    timings: Timings,
    probes: HashMap<ProbeKey, LinearProbe>,
}

struct Stopwatch<'a> {
    timings: &'a mut Timings,
}

impl Stopwatch<'_> {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

struct Loaded {
    train: FeatureDataset,
    splits: Vec<(SplitTag, FeatureDataset)>,
    names: Option<Vec<String>>,
    groupings: Vec<GroupAssignment>,
}

fn load_entry(manifest: &RunManifest, entry: &ManifestEntry) -> Result<Loaded> {
    let train = read_feature_dump(&entry.probe_train)?;
    let min_lambda = manifest.min_lambda();
    if min_lambda < 1.0 && !train.has_predictions() {
        return Err(Error::MissingPredictions {
            what: entry.probe_train.display().to_string(),
            lambda: min_lambda,
        });
    }
    let mut splits = Vec::new();
    for (tag, path) in entry.dumps().into_iter().skip(1) {
        let ds = read_feature_dump(path)?;
        if ds.num_classes != train.num_classes || ds.feature_dim() != train.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} has {} classes x {} features, probe_train has {} x {}",
                path.display(),
                ds.num_classes,
                ds.feature_dim(),
                train.num_classes,
                train.feature_dim()
            )));
        }
        splits.push((tag, ds));
    }
    let n = train.num_classes as usize;
    let names = manifest
        .class_names
        .clone()
        .or_else(|| train.meta.class_names.clone());
    if let Some(names) = &names {
        if names.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} class names for {n} classes",
                names.len()
            )));
        }
    }
    let space = match &names {
        Some(names) => ClassSpace::Names(names),
        None => ClassSpace::Count(n),
    };
    let groupings = manifest
        .groupings
        .iter()
        .map(|p| read_grouping(p, space))
        .collect::<Result<Vec<_>>>()?;
    Ok(Loaded {
        train,
        splits,
        names,
        groupings,
    })
}

fn undefined(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateGrouping | Error::NoEdges | Error::NoConfusions | Error::EmptyConfusion
    )
}

struct RowContext<'a> {
    manifest: &'a RunManifest,
    entry: &'a ManifestEntry,
    loaded: &'a Loaded,
    lambda: f64,
    seed: u64,
    trace: &'a TrainingTrace,
}

fn analyze_split(
    ctx: &RowContext<'_>,
    split: SplitTag,
    ds: &FeatureDataset,
    probe: &LinearProbe,
    watch: &mut Stopwatch<'_>,
) -> Result<MetricsRow> {
    let manifest = ctx.manifest;
    let n = ds.num_classes as usize;
    let key = ctx.entry.key();
    let mut notes = Vec::new();

    let (pred, cm, graph) = watch.time("evaluate", || -> Result<_> {
        let pred = predict(probe, ds.features.view())?;
        let cm = build_confusion_matrix(&ds.true_labels, &pred, n)?;
        let graph = to_confusion_graph(
            &cm,
            Some(key.clone()),
            Some(ctx.lambda),
            Some(split),
            ctx.loaded.names.clone(),
        )?;
        Ok((pred, cm, graph))
    })?;
    if !cm.empty_rows.is_empty() {
        notes.push(format!("classes without samples: {:?}", cm.empty_rows));
    }
    let model_agreement = ds
        .predicted_labels
        .as_ref()
        .map(|ym| pred.iter().zip(ym).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64);

    let partition: Option<CommunityPartition> = watch.time("communities", || {
        if graph.total_weight() > 0.0 {
            detect_communities(
                &graph,
                ctx.seed,
                manifest.louvain.min_gain,
                manifest.louvain.max_passes,
            )
            .map(Some)
        } else {
            Ok(None)
        }
    })?;
    if partition.is_none() {
        notes.push("no confusions: modularity and assortativity undefined".into());
    }

    let assort = watch.time("assortativity", || -> Result<Vec<AssortativitySummary>> {
        let mut out = Vec::new();
        for g in &ctx.loaded.groupings {
            let r = match association_matrix(&graph, g).and_then(|e| assortativity(&e)) {
                Ok(res) => Some(res.r),
                Err(e) if undefined(&e) => None,
                Err(e) => return Err(e),
            };
            let baseline = random_grouping(n, &g.group_sizes(), ctx.seed)?;
            let random_baseline_r =
                match association_matrix(&graph, &baseline).and_then(|e| assortativity(&e)) {
                    Ok(res) => Some(res.r),
                    Err(e) if undefined(&e) => None,
                    Err(e) => return Err(e),
                };
            let q = match modularity(&graph, &g.membership) {
                Ok((q, _)) => Some(q),
                Err(e) if undefined(&e) => None,
                Err(e) => return Err(e),
            };
            out.push(AssortativitySummary {
                grouping: g.name.clone(),
                r,
                category: r.map(crate::netsci::interpret_assortativity),
                random_baseline_r,
                modularity: q,
            });
        }
        Ok(out)
    })?;

    let k = manifest.k.min(n);
    let hub_list = ranked_classes(&graph, &hubs(&graph, k)?);
    let hardest = ranked_classes(&graph, &difficulty_ranking(&graph, k, true)?);
    let easiest = ranked_classes(&graph, &difficulty_ranking(&graph, k, false)?);

    if let Some(ex) = &manifest.export {
        watch.time("export", || -> Result<()> {
            fs::create_dir_all(&ex.dir).map_err(|e| Error::io(&ex.dir, e))?;
            let plotted = if ex.prune_fraction > 0.0 {
                prune_edges(&graph, ex.prune_fraction)?
            } else {
                graph.clone()
            };
            let attrs = NodeAttributes {
                partition: partition.as_ref(),
                grouping: ctx.loaded.groupings.first(),
            };
            let stem = format!(
                "e{}_{}_lambda{}_seed{}_{}",
                key.epoch,
                key.layer,
                ctx.lambda,
                ctx.seed,
                split.as_str()
            );
            for f in &ex.formats {
                let format = ExportFormat::from_str(f)?;
                export_graph(
                    &plotted,
                    &attrs,
                    format,
                    ex.dir.join(format!("{stem}.{}", format.extension())),
                )?;
            }
            Ok(())
        })?;
    }

    Ok(MetricsRow {
        epoch: key.epoch,
        layer: key.layer.clone(),
        lambda: ctx.lambda,
        seed: ctx.seed,
        split,
        num_samples: ds.len(),
        accuracy: accuracy(&cm)?,
        model_agreement,
        cm_sparsity: sparsity(&cm.normalized),
        graph_sparsity: sparsity(&graph.adjacency),
        num_edges: graph.num_edges(),
        total_weight: graph.total_weight(),
        communities: partition.map(|p| CommunitySummary {
            modularity: p.modularity,
            num_communities: p.num_communities,
            category: interpret_modularity(p.modularity),
            membership: p.membership,
        }),
        assortativity: assort,
        hubs: hub_list,
        hardest,
        easiest,
        trace: TraceSummary::from_trace(ctx.trace),
        notes,
    })
}

fn process_entry(
    manifest: &RunManifest,
    entry: &ManifestEntry,
    warm: Option<&HashMap<ProbeKey, LinearProbe>>,
) -> Result<EntryOutput> {
    let mut timings = Timings::new();
    let mut watch = Stopwatch {
        timings: &mut timings,
    };
    let loaded = watch.time("load", || load_entry(manifest, entry))?;
    let config = resolve_probe_config(manifest, &entry.layer);
    let mut rows = Vec::new();
    let mut probes = HashMap::new();
    for &lambda in &manifest.lambdas {
        for &seed in &manifest.seeds {
            let pk = (lambda.to_bits(), seed);
            let start = warm.and_then(|w| w.get(&pk));
            let (mut probe, trace) = watch.time("train", || {
                train_probe_from(&loaded.train, lambda, &config, seed, start)
            })?;
            probe.key = Some(entry.key());
            let ctx = RowContext {
                manifest,
                entry,
                loaded: &loaded,
                lambda,
                seed,
                trace: &trace,
            };
            for (split, ds) in &loaded.splits {
                rows.push(analyze_split(&ctx, *split, ds, &probe, &mut watch)?);
            }
            probes.insert(pk, probe);
        }
    }
    Ok(EntryOutput {
        rows,
        timings,
        probes,
    })
}

/// Groups entry indices into work units: singletons, or per-layer epoch
/// chains when warm-starting.
fn work_units(manifest: &RunManifest) -> Vec<Vec<usize>> {
    if !manifest.warm_start {
        return (0..manifest.entries.len()).map(|i| vec![i]).collect();
    }
    let mut by_layer: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_layer.entry(e.layer.as_str()).or_default().push(i);
    }
    by_layer
        .into_values()
        .map(|mut chain| {
            chain.sort_by_key(|&i| manifest.entries[i].epoch);
            chain
        })
        .collect()
}

fn run_unit(manifest: &RunManifest, unit: &[usize]) -> Vec<(usize, Result<EntryOutput>)> {
    let mut out = Vec::with_capacity(unit.len());
    let mut previous: Option<HashMap<ProbeKey, LinearProbe>> = None;
    for &i in unit {
        let entry = &manifest.entries[i];
        let result = process_entry(manifest, entry, previous.as_ref());
        previous = match &result {
            Ok(o) => Some(o.probes.clone()),
            Err(_) => {
                log::warn!(
                    "warm-start chain for layer {} restarts after a failure",
                    entry.layer
                );
                None
            }
        };
        out.push((i, result));
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn seed_summaries(manifest: &RunManifest, rows: &BTreeMap<String, MetricsRow>) -> Vec<SeedSummary> {
    if manifest.seeds.len() < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for entry in &manifest.entries {
        let key = entry.key();
        for &lambda in &manifest.lambdas {
            for (split, _) in entry.dumps().into_iter().skip(1) {
                let group: Vec<&MetricsRow> = manifest
                    .seeds
                    .iter()
                    .filter_map(|&s| rows.get(&row_key(&key, lambda, s, split)))
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let qs: Vec<f64> = group
                    .iter()
                    .filter_map(|r| r.communities.as_ref().map(|c| c.modularity))
                    .collect();
                let accs: Vec<f64> = group.iter().map(|r| r.accuracy).collect();
                let (q_mean, q_std) = if qs.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&qs);
                    (Some(m), Some(s))
                };
                out.push(SeedSummary {
                    epoch: key.epoch,
                    layer: key.layer.clone(),
                    lambda,
                    split,
                    num_seeds: group.len(),
                    modularity_mean: q_mean,
                    modularity_std: q_std,
                    accuracy_mean: mean_std(&accs).0,
                });
            }
        }
    }
    out
}

/// Runs every entry of a validated manifest. Entry failures are recorded in
/// the report rather than returned.
pub fn run_pipeline(
    manifest: &RunManifest,
    manifest_bytes: &[u8],
    options: &PipelineOptions,
) -> Result<MetricsReport> {
    manifest.validate()?;
    let total = Instant::now();
    let units = work_units(manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    let mut results: Vec<(usize, Result<EntryOutput>)> = pool.install(|| {
        units
            .par_iter()
            .flat_map_iter(|u| run_unit(manifest, u))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);

    let mut rows = BTreeMap::new();
    let mut failures = Vec::new();
    let mut timings = Timings::new();
    for (i, result) in results {
        let entry = &manifest.entries[i];
        match result {
            Ok(out) => {
                for row in out.rows {
                    rows.insert(row.key(), row);
                }
                for (stage, secs) in out.timings {
                    *timings.entry(stage).or_default() += secs;
                }
            }
            Err(e) => {
                log::error!("entry {} failed: {e}", entry.key());
                failures.push(EntryFailure {
                    epoch: entry.epoch,
                    layer: entry.layer.clone(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    timings.insert("total".into(), total.elapsed().as_secs_f64());
    let seed_summaries = seed_summaries(manifest, &rows);
    Ok(MetricsReport {
        format_version: REPORT_FORMAT_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        manifest_sha256: manifest_sha256(manifest_bytes),
        rows,
        seed_summaries,
        failures,
        timings,
    })
}
