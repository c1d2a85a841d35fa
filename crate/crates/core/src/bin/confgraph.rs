use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use confgraph::confusion::{
    accuracy, build_confusion_matrix, read_matrix_csv, write_matrix_csv, ConfusionGraph,
};
use confgraph::dataset::{read_feature_dump, read_grouping, read_manifest, ClassSpace, GroupAssignment};
use confgraph::graphops::{
    aggregate_supernodes, export_graph, prune_edges, read_graph, to_edge_csv, ExportFormat, NodeAttributes,
};
use confgraph::netsci::{
    association_matrix, assortativity, degrees, detect_communities, difficulty_ranking, hubs,
    interpret_modularity, random_grouping, CommunityPartition, ModularityCategory,
};
use confgraph::pipeline::{run_pipeline, PipelineOptions};
use confgraph::probe::{predict, read_probe, train_probe, write_probe, ProbeConfig, ProbeConfigPatch};
use confgraph::report::{read_report, render_report, write_report};
use confgraph::synth::{write_synth, SynthSpec};
use confgraph::Error;

/// Confusion-graph analysis of linear probes on classifier features.
#[derive(Debug, Parser)]
#[command(name = "confgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full analysis described by a manifest and write a JSON report.
    Run {
        manifest: PathBuf,
        /// Report path [default: $CONFGRAPH_OUT_DIR/report.json, else next to the manifest]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent entries (0 = all cores)
        #[arg(long, env = "CONFGRAPH_JOBS", default_value_t = 0)]
        jobs: usize,
    },
    /// Train one probe on a feature dump and write its checkpoint.
    Probe {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file with probe hyperparameter overrides
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a row-normalized confusion matrix CSV.
    Cm {
        #[arg(long)]
        dump: PathBuf,
        /// Probe checkpoint; without it the dump's model predictions are used
        #[arg(long)]
        probe: Option<PathBuf>,
        #[command(flatten)]
        names: NamesArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a confusion matrix into a confusion graph and list top-k classes.
    Graph {
        #[arg(long)]
        cm: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// matrix or edge_csv
        #[arg(long, default_value = "matrix")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect communities by modularity maximization.
    Communities {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        min_gain: f64,
        #[arg(long, default_value_t = 50)]
        max_passes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assortativity of a graph with respect to a class grouping.
    Assort {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        grouping: PathBuf,
        /// Seed of the size-matched random baseline
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Remove the lowest-weight fraction of edges (for plotting).
    Prune {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value = "edge_csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collapse communities or groups into supernodes.
    Aggregate {
        #[command(flatten)]
        graph: GraphArg,
        #[command(flatten)]
        partition: PartitionArg,
        #[arg(long, default_value = "matrix")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a graph as GEXF, DOT or edge CSV.
    Export {
        #[command(flatten)]
        graph: GraphArg,
        #[command(flatten)]
        partition: PartitionArg,
        #[arg(long, default_value = "gexf")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic feature dumps and a manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, env = "CONFGRAPH_OUT_DIR")]
        out: PathBuf,
    },
    /// Pretty-print a JSON report.
    Report { report: PathBuf },
}

#[derive(Debug, Args)]
struct GraphArg {
    /// Matrix CSV or edge CSV
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    names: NamesArg,
}

#[derive(Debug, Args)]
struct NamesArg {
    /// Text file with one class name per line
    #[arg(long)]
    class_names: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct PartitionArg {
    /// Partition JSON written by `communities`
    #[arg(long)]
    communities: Option<PathBuf>,
    /// Grouping CSV (class,group)
    #[arg(long)]
    grouping: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PartitionOutput {
    #[serde(flatten)]
    partition: CommunityPartition,
    category: ModularityCategory,
    communities: Vec<Vec<String>>,
}

enum Failure {
    Partial(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CliResult = Result<(), Failure>;

fn read_names(arg: &NamesArg) -> Result<Option<Vec<String>>, Error> {
    let Some(path) = &arg.class_names else {
        return Ok(None);
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(Some(
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
    ))
}

fn load_graph(arg: &GraphArg) -> Result<ConfusionGraph, Error> {
    let names = read_names(&arg.names)?;
    read_graph(&arg.graph, names.as_deref())
}

fn load_partition(
    arg: &PartitionArg,
    graph: &ConfusionGraph,
) -> Result<(Option<CommunityPartition>, Option<GroupAssignment>), Error> {
    if let Some(path) = &arg.communities {
        let bytes = fs::read(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let p: PartitionOutput = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if p.partition.membership.len() != graph.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "partition has {} nodes, graph has {}",
                p.partition.membership.len(),
                graph.num_nodes()
            )));
        }
        return Ok((Some(p.partition), None));
    }
    if let Some(path) = &arg.grouping {
        let g = match &graph.node_names {
            Some(names) => read_grouping(path, ClassSpace::Names(names))?,
            None => read_grouping(path, ClassSpace::Count(graph.num_nodes()))?,
        };
        return Ok((None, Some(g)));
    }
    Ok((None, None))
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_graph(graph: &ConfusionGraph, format: &str, out: Option<&Path>) -> Result<(), Error> {
    let text = match format {
        "matrix" => confgraph::confusion::matrix_csv_string(&graph.adjacency, graph.node_names.as_deref()),
        "edge_csv" | "csv" => to_edge_csv(graph),
        other => return Err(Error::UnknownFormat(other.to_string())),
    };
    write_text(out, &text)
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn ranked(graph: &ConfusionGraph, list: Vec<(usize, f64)>) -> serde_json::Value {
    list.into_iter()
        .map(|(i, v)| json!({"class": i, "name": graph.node_label(i), "value": v}))
        .collect()
}

fn execute(command: Command) -> CliResult {
    match command {
        Command::Run { manifest, out, jobs } => {
            let (m, bytes) = read_manifest(&manifest)?;
            let report = run_pipeline(&m, &bytes, &PipelineOptions { jobs })?;
            let out = out.unwrap_or_else(|| {
                let dir = std::env::var_os("CONFGRAPH_OUT_DIR")
                    .map(PathBuf::from)
                    .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
                dir.join("report.json")
            });
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            write_report(&report, &out)?;
            eprintln!("wrote {}", out.display());
            if !report.is_success() {
                return Err(Failure::Partial(format!(
                    "{} of {} entries failed",
                    report.failures.len(),
                    m.entries.len()
                )));
            }
        }
        Command::Probe {
            train,
            lambda,
            seed,
            config,
            out,
        } => {
            let ds = read_feature_dump(&train)?;
            let mut cfg = ProbeConfig::default();
            if let Some(path) = config {
                let bytes = fs::read(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let patch: ProbeConfigPatch = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
                    path,
                    message: e.to_string(),
                })?;
                patch.apply(&mut cfg);
            }
            let (probe, trace) = train_probe(&ds, lambda, &cfg, seed)?;
            write_probe(&probe, &out)?;
            print!("{}", pretty(&trace));
        }
        Command::Cm {
            dump,
            probe,
            names,
            out,
        } => {
            let ds = read_feature_dump(&dump)?;
            let pred = match probe {
                Some(p) => predict(&read_probe(&p)?, ds.features.view())?,
                None => ds
                    .predicted_labels
                    .clone()
                    .ok_or_else(|| Error::MissingPredictions {
                        what: dump.display().to_string(),
                        lambda: 0.0,
                    })?,
            };
            let cm = build_confusion_matrix(&ds.true_labels, &pred, ds.num_classes as usize)?;
            let names = read_names(&names)?.or_else(|| ds.meta.class_names.clone());
            write_matrix_csv(&cm.normalized, names.as_deref(), &out)?;
            print!(
                "{}",
                pretty(&json!({"accuracy": accuracy(&cm)?, "empty_rows": cm.empty_rows}))
            );
        }
        Command::Graph { cm, k, format, out } => {
            let (mut adj, names) = read_matrix_csv(&cm)?;
            for i in 0..adj.nrows().min(adj.ncols()) {
                adj[[i, i]] = 0.0;
            }
            let graph = ConfusionGraph::new(adj, Some(names))?;
            if let Some(out) = &out {
                write_graph(&graph, &format, Some(out))?;
            }
            let k = k.min(graph.num_nodes());
            let deg = degrees(&graph);
            let summary = json!({
                "num_nodes": graph.num_nodes(),
                "num_edges": graph.num_edges(),
                "total_weight": deg.total,
                "hubs": ranked(&graph, hubs(&graph, k)?),
                "hardest": ranked(&graph, difficulty_ranking(&graph, k, true)?),
                "easiest": ranked(&graph, difficulty_ranking(&graph, k, false)?),
            });
            print!("{}", pretty(&summary));
        }
        Command::Communities {
            graph,
            seed,
            min_gain,
            max_passes,
            out,
        } => {
            let g = load_graph(&graph)?;
            let p = detect_communities(&g, seed, min_gain, max_passes)?;
            let communities = (0..p.num_communities)
                .map(|c| p.members(c).into_iter().map(|i| g.node_label(i)).collect())
                .collect();
            let output = PartitionOutput {
                category: interpret_modularity(p.modularity),
                partition: p,
                communities,
            };
            write_text(out.as_deref(), &pretty(&output))?;
        }
        Command::Assort {
            graph,
            grouping,
            seed,
            out,
        } => {
            let g = load_graph(&graph)?;
            let (_, grouping) = load_partition(
                &PartitionArg {
                    communities: None,
                    grouping: Some(grouping),
                },
                &g,
            )?;
            let grouping = grouping.expect("grouping given");
            let res = assortativity(&association_matrix(&g, &grouping)?)?;
            let baseline = random_grouping(g.num_nodes(), &grouping.group_sizes(), seed)?;
            let base_r = association_matrix(&g, &baseline)
                .and_then(|e| assortativity(&e))
                .map(|r| r.r)
                .ok();
            let output = json!({
                "grouping": res.grouping_name,
                "r": res.r,
                "category": res.category,
                "random_baseline_r": base_r,
            });
            write_text(out.as_deref(), &pretty(&output))?;
        }
        Command::Prune {
            graph,
            fraction,
            format,
            out,
        } => {
            let g = load_graph(&graph)?;
            let pruned = prune_edges(&g, fraction)?;
            write_graph(&pruned, &format, Some(&out))?;
            eprintln!(
                "removed {} of {} edges",
                g.num_edges() - pruned.num_edges(),
                g.num_edges()
            );
        }
        Command::Aggregate {
            graph,
            partition,
            format,
            out,
        } => {
            let g = load_graph(&graph)?;
            let membership = match load_partition(&partition, &g)? {
                (Some(p), _) => p.membership,
                (_, Some(grp)) => grp.membership,
                _ => {
                    return Err(
                        Error::InvalidArgument("aggregate needs --communities or --grouping".into()).into(),
                    )
                }
            };
            let agg = aggregate_supernodes(&g, &membership)?;
            write_graph(&agg, &format, Some(&out))?;
        }
        Command::Export {
            graph,
            partition,
            format,
            out,
        } => {
            let g = load_graph(&graph)?;
            let (p, grp) = load_partition(&partition, &g)?;
            let format: ExportFormat = format.parse()?;
            let attrs = NodeAttributes {
                partition: p.as_ref(),
                grouping: grp.as_ref(),
            };
            export_graph(&g, &attrs, format, &out)?;
        }
        Command::Synth { spec, out } => {
            let bytes = fs::read(&spec).map_err(|e| Error::Io {
                path: spec.clone(),
                source: e,
            })?;
            let s: SynthSpec = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
                path: spec.clone(),
                message: e.to_string(),
            })?;
            let (generated, files) = write_synth(&s, &out)?;
            let summary = json!({
                "manifest": files.manifest,
                "probe_train": files.probe_train,
                "probe_eval": files.probe_eval,
                "validation": files.validation,
                "grouping": files.grouping,
                "reference_error_rate": generated.achieved_error_rate,
                "warnings": generated.warnings,
            });
            print!("{}", pretty(&summary));
        }
        Command::Report { report } => {
            print!("{}", render_report(&read_report(&report)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.render().to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!("{}", json!({"error": "usage", "message": first}));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial(message)) => {
            eprintln!("{}", json!({"error": "partial_failure", "message": message}));
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}
