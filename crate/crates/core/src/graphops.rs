//! Plotting-oriented graph transformations and GEXF / DOT / edge-CSV export.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::confusion::{parse_matrix_csv, ConfusionGraph};
use crate::dataset::GroupAssignment;
use crate::error::{Error, Result};
use crate::netsci::{aggregate_matrix, renumber, CommunityPartition};

/// Removes the `floor(fraction * |E|)` weakest nonzero edges, ordering ties
/// by (weight, source, target). Returns a copy flagged as pruned.
pub fn prune_edges(graph: &ConfusionGraph, fraction: f64) -> Result<ConfusionGraph> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "prune fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let mut edges = graph.edges();
    // edges() is row-major, so a stable sort by weight keeps (source, target) order on ties
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    let remove = (fraction * edges.len() as f64 + 1e-9).floor() as usize;
    let mut out = graph.clone();
    for &(i, j, _) in &edges[..remove.min(edges.len())] {
        out.adjacency[[i, j]] = 0.0;
    }
    out.meta.pruned = true;
    Ok(out)
}

/// Induced subgraph on `nodes` (kept in ascending index order). The index
/// map from new to original indices is stored in the metadata.
pub fn subgraph(graph: &ConfusionGraph, nodes: &[usize]) -> Result<ConfusionGraph> {
    let n = graph.num_nodes();
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("subgraph needs at least one node".into()));
    }
    if let Some(&bad) = nodes.iter().find(|&&i| i >= n) {
        return Err(Error::UnknownNode(bad));
    }
    let mut keep = nodes.to_vec();
    keep.sort_unstable();
    keep.dedup();
    let adjacency = Array2::from_shape_fn((keep.len(), keep.len()), |(a, b)| {
        graph.adjacency[[keep[a], keep[b]]]
    });
    let names = graph
        .node_names
        .as_ref()
        .map(|names| keep.iter().map(|&i| names[i].clone()).collect());
    let mut out = ConfusionGraph::new(adjacency, names)?;
    let base = graph.meta.index_map.clone();
    out.meta = graph.meta.clone();
    out.meta.index_map = Some(match base {
        Some(map) => keep.iter().map(|&i| map[i]).collect(),
        None => keep,
    });
    Ok(out)
}

/// One node per community; edge weights are summed, intra-community mass
/// becomes a self-loop. Supernodes are named after their members.
pub fn aggregate_supernodes(graph: &ConfusionGraph, membership: &[usize]) -> Result<ConfusionGraph> {
    let n = graph.num_nodes();
    if membership.len() != n {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} of {n} nodes",
            membership.len()
        )));
    }
    let (membership, k) = renumber(membership);
    let adjacency = aggregate_matrix(&graph.adjacency, &membership, k);
    let names = (0..k)
        .map(|c| {
            let members: Vec<String> = (0..n)
                .filter(|&i| membership[i] == c)
                .map(|i| graph.node_label(i))
                .collect();
            members.join("+")
        })
        .collect();
    let mut out = ConfusionGraph::new(adjacency, Some(names))?;
    out.meta = graph.meta.clone();
    out.meta.aggregated = true;
    out.meta.index_map = None;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Gexf,
    Dot,
    EdgeCsv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Gexf => "gexf",
            ExportFormat::Dot => "dot",
            ExportFormat::EdgeCsv => "csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gexf" => Ok(ExportFormat::Gexf),
            "dot" => Ok(ExportFormat::Dot),
            "edge_csv" | "csv" => Ok(ExportFormat::EdgeCsv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Optional node annotations for exports.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeAttributes<'a> {
    pub partition: Option<&'a CommunityPartition>,
    pub grouping: Option<&'a GroupAssignment>,
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn check_attrs(graph: &ConfusionGraph, attrs: &NodeAttributes<'_>) -> Result<()> {
    let n = graph.num_nodes();
    if let Some(p) = attrs.partition {
        if p.membership.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "partition covers {} nodes, graph has {n}",
                p.membership.len()
            )));
        }
    }
    if let Some(g) = attrs.grouping {
        if g.num_classes() != n {
            return Err(Error::DimensionMismatch(format!(
                "grouping covers {} classes, graph has {n}",
                g.num_classes()
            )));
        }
    }
    Ok(())
}

pub fn to_gexf(graph: &ConfusionGraph, attrs: &NodeAttributes<'_>) -> Result<String> {
    check_attrs(graph, attrs)?;
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<gexf xmlns=\"http://gexf.net/1.3\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" xsi:schemaLocation=\"http://gexf.net/1.3 http://gexf.net/1.3/gexf.xsd\" version=\"1.3\">\n");
    s.push_str("  <graph defaultedgetype=\"directed\" mode=\"static\">\n");
    if attrs.partition.is_some() || attrs.grouping.is_some() {
        s.push_str("    <attributes class=\"node\">\n");
        if attrs.partition.is_some() {
            s.push_str("      <attribute id=\"community\" title=\"community\" type=\"integer\"/>\n");
        }
        if attrs.grouping.is_some() {
            s.push_str("      <attribute id=\"group\" title=\"group\" type=\"string\"/>\n");
        }
        s.push_str("    </attributes>\n");
    }
    s.push_str("    <nodes>\n");
    for i in 0..graph.num_nodes() {
        let label = xml_escape(&graph.node_label(i));
        let mut values = Vec::new();
        if let Some(p) = attrs.partition {
            values.push(format!(
                "<attvalue for=\"community\" value=\"{}\"/>",
                p.membership[i]
            ));
        }
        if let Some(g) = attrs.grouping {
            values.push(format!(
                "<attvalue for=\"group\" value=\"{}\"/>",
                xml_escape(&g.groups[g.membership[i]])
            ));
        }
        if values.is_empty() {
            let _ = writeln!(s, "      <node id=\"{i}\" label=\"{label}\"/>");
        } else {
            let _ = writeln!(
                s,
                "      <node id=\"{i}\" label=\"{label}\"><attvalues>{}</attvalues></node>",
                values.join("")
            );
        }
    }
    s.push_str("    </nodes>\n    <edges>\n");
    for (e, (i, j, w)) in graph.edges().into_iter().enumerate() {
        let _ = writeln!(
            s,
            "      <edge id=\"{e}\" source=\"{i}\" target=\"{j}\" weight=\"{w}\"/>"
        );
    }
    s.push_str("    </edges>\n  </graph>\n</gexf>\n");
    Ok(s)
}

pub fn to_dot(graph: &ConfusionGraph, attrs: &NodeAttributes<'_>) -> Result<String> {
    check_attrs(graph, attrs)?;
    let edges = graph.edges();
    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let mut s = String::from("digraph confusion {\n");
    for i in 0..graph.num_nodes() {
        let mut fields = vec![format!("label=\"{}\"", dot_escape(&graph.node_label(i)))];
        if let Some(p) = attrs.partition {
            fields.push(format!("community={}", p.membership[i]));
        }
        if let Some(g) = attrs.grouping {
            fields.push(format!("group=\"{}\"", dot_escape(&g.groups[g.membership[i]])));
        }
        let _ = writeln!(s, "  {i} [{}];", fields.join(", "));
    }
    for (i, j, w) in edges {
        let pen = 1.0 + 4.0 * w / max_w;
        let _ = writeln!(s, "  {i} -> {j} [weight={w}, penwidth={pen:.3}];");
    }
    s.push_str("}\n");
    Ok(s)
}

/// `source,target,weight` rows using node names when present.
pub fn to_edge_csv(graph: &ConfusionGraph) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "target", "weight"])
        .expect("in-memory write");
    for (i, j, weight) in graph.edges() {
        w.write_record([graph.node_label(i), graph.node_label(j), weight.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn render_graph(
    graph: &ConfusionGraph,
    attrs: &NodeAttributes<'_>,
    format: ExportFormat,
) -> Result<String> {
    match format {
        ExportFormat::Gexf => to_gexf(graph, attrs),
        ExportFormat::Dot => to_dot(graph, attrs),
        ExportFormat::EdgeCsv => {
            check_attrs(graph, attrs)?;
            Ok(to_edge_csv(graph))
        }
    }
}

pub fn export_graph(
    graph: &ConfusionGraph,
    attrs: &NodeAttributes<'_>,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = render_graph(graph, attrs, format)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses an edge CSV. Node identities come from `node_names` when given
/// (tokens may be names or indices); otherwise all tokens must be indices
/// and the node count is `max index + 1` unless `num_nodes` is given.
pub fn parse_edge_csv(
    text: &str,
    node_names: Option<&[String]>,
    num_nodes: Option<usize>,
    path: &Path,
) -> Result<ConfusionGraph> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::parse(path, e))?;
    if headers.iter().collect::<Vec<_>>() != ["source", "target", "weight"] {
        return Err(Error::parse(path, "expected header `source,target,weight`"));
    }
    let by_name: HashMap<&str, usize> = node_names
        .map(|names| names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect())
        .unwrap_or_default();
    let resolve = |tok: &str| -> Result<usize> {
        if let Some(&i) = by_name.get(tok) {
            return Ok(i);
        }
        tok.parse::<usize>()
            .map_err(|_| Error::parse(path, format!("unknown node {tok:?}")))
    };
    let mut edges = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        if rec.len() != 3 {
            return Err(Error::parse(path, "edge rows need 3 fields"));
        }
        let w: f64 = rec[2]
            .parse()
            .map_err(|e| Error::parse(path, format!("weight {:?}: {e}", &rec[2])))?;
        edges.push((resolve(&rec[0])?, resolve(&rec[1])?, w));
    }
    let inferred = edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0);
    let n = node_names.map(<[String]>::len).or(num_nodes).unwrap_or(inferred);
    if inferred > n {
        return Err(Error::parse(
            path,
            format!("node index {} out of range for {n} nodes", inferred - 1),
        ));
    }
    let mut adjacency = Array2::zeros((n, n));
    for (i, j, w) in edges {
        adjacency[[i, j]] += w;
    }
    ConfusionGraph::new(adjacency, node_names.map(<[String]>::to_vec))
}

/// Loads a graph from either an edge CSV (`source,target,weight` header) or
/// a square matrix CSV with a header of node names. Matrix diagonals are
/// kept as-is.
pub fn read_graph(path: impl AsRef<Path>, node_names: Option<&[String]>) -> Result<ConfusionGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("").trim();
    if first == "source,target,weight" {
        return parse_edge_csv(&text, node_names, None, path);
    }
    let (adjacency, names) = parse_matrix_csv(&text, path)?;
    let all_indices = names.iter().enumerate().all(|(i, n)| n == &i.to_string());
    let names = match node_names {
        Some(n) => Some(n.to_vec()),
        None if all_indices => None,
        None => Some(names),
    };
    ConfusionGraph::new(adjacency, names)
}
