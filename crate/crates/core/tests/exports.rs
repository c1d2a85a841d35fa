use ndarray::Array2;

use confgraph::confusion::ConfusionGraph;
use confgraph::dataset::GroupAssignment;
use confgraph::graphops::{export_graph, read_graph, to_dot, to_gexf, ExportFormat, NodeAttributes};
use confgraph::netsci::detect_communities;

const GEXF_NS: &str = "http://gexf.net/1.3";

fn sample() -> ConfusionGraph {
    let mut a = Array2::zeros((4, 4));
    a[[0, 1]] = 0.5;
    a[[1, 0]] = 0.125;
    a[[2, 3]] = 1.0 / 3.0;
    a[[3, 2]] = 0.25;
    a[[1, 2]] = 0.01;
    let names = vec![
        "cat".into(),
        "dog & wolf".into(),
        "<sea>".into(),
        "\"oak\"".into(),
    ];
    ConfusionGraph::new(a, Some(names)).unwrap()
}

#[test]
fn gexf_parses_back_to_the_same_graph() {
    let g = sample();
    let partition = detect_communities(&g, 1, 1e-9, 50).unwrap();
    let grouping =
        GroupAssignment::new("kind", vec!["animal".into(), "other".into()], vec![0, 0, 1, 1]).unwrap();
    let attrs = NodeAttributes {
        partition: Some(&partition),
        grouping: Some(&grouping),
    };
    let xml = to_gexf(&g, &attrs).unwrap();
    let doc = roxmltree::Document::parse(&xml).expect("well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "gexf");
    assert_eq!(root.tag_name().namespace(), Some(GEXF_NS));
    assert_eq!(root.attribute("version"), Some("1.3"));
    let graph = root
        .children()
        .find(|n| n.has_tag_name((GEXF_NS, "graph")))
        .unwrap();
    assert_eq!(graph.attribute("defaultedgetype"), Some("directed"));

    let nodes: Vec<_> = graph
        .descendants()
        .filter(|n| n.has_tag_name((GEXF_NS, "node")))
        .collect();
    assert_eq!(nodes.len(), 4);
    for (i, node) in nodes.iter().enumerate() {
        assert_eq!(node.attribute("id"), Some(i.to_string().as_str()));
        assert_eq!(node.attribute("label"), Some(g.node_label(i).as_str()));
        let values: Vec<(&str, &str)> = node
            .descendants()
            .filter(|n| n.has_tag_name((GEXF_NS, "attvalue")))
            .map(|n| (n.attribute("for").unwrap(), n.attribute("value").unwrap()))
            .collect();
        let community = partition.membership[i].to_string();
        assert!(values.contains(&("community", community.as_str())));
        assert!(values.contains(&("group", grouping.groups[grouping.membership[i]].as_str())));
    }

    let mut back = Array2::<f64>::zeros((4, 4));
    let edges: Vec<_> = graph
        .descendants()
        .filter(|n| n.has_tag_name((GEXF_NS, "edge")))
        .collect();
    assert_eq!(edges.len(), g.num_edges());
    for e in edges {
        let s: usize = e.attribute("source").unwrap().parse().unwrap();
        let t: usize = e.attribute("target").unwrap().parse().unwrap();
        back[[s, t]] = e.attribute("weight").unwrap().parse().unwrap();
    }
    assert_eq!(back, g.adjacency);
}

#[test]
fn dot_lists_every_edge_with_scaled_pen() {
    let g = sample();
    let dot = to_dot(&g, &NodeAttributes::default()).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches(" -> ").count(), g.num_edges());
    // heaviest edge gets the widest pen: 1 + 4 * w / max
    assert!(dot.contains("0 -> 1") && dot.contains("penwidth=5"));
    assert!(dot.contains("\\\"oak\\\""));
}

#[test]
fn files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let g = sample();
    for format in [ExportFormat::Gexf, ExportFormat::Dot, ExportFormat::EdgeCsv] {
        let a = dir.path().join(format!("a.{}", format.extension()));
        let b = dir.path().join(format!("b.{}", format.extension()));
        export_graph(&g, &NodeAttributes::default(), format, &a).unwrap();
        export_graph(&sample(), &NodeAttributes::default(), format, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn edge_csv_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let g = sample();
    let path = dir.path().join("g.csv");
    export_graph(&g, &NodeAttributes::default(), ExportFormat::EdgeCsv, &path).unwrap();
    let back = read_graph(&path, g.node_names.as_deref()).unwrap();
    assert_eq!(back.adjacency, g.adjacency);
}
