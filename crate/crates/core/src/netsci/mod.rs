//! Network-science metrics on confusion graphs.
//!
//! Degree conventions follow the confusion-graph reading: the in-degree of a
//! class is the confusion mass it attracts (column sum), the out-degree the
//! mass its samples leak to other classes (row sum).

mod assortativity;
mod louvain;
mod modularity;

pub use assortativity::{
    association_matrix, assortativity, interpret_assortativity, random_grouping, AssociationMatrix,
    AssortativityCategory, AssortativityResult,
};
pub use louvain::{detect_communities, CommunityPartition};
pub use modularity::{aggregate_matrix, interpret_modularity, modularity, renumber, ModularityCategory};

use serde::{Deserialize, Serialize};

use crate::confusion::ConfusionGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degrees {
    pub in_degree: Vec<f64>,
    pub out_degree: Vec<f64>,
    pub total: f64,
}

pub fn degrees(graph: &ConfusionGraph) -> Degrees {
    let a = &graph.adjacency;
    Degrees {
        in_degree: a.columns().into_iter().map(|c| c.sum()).collect(),
        out_degree: a.rows().into_iter().map(|r| r.sum()).collect(),
        total: a.sum(),
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, {n}]")));
    }
    Ok(())
}

/// Ranks `values`: descending (or ascending) by value, ties by lower index.
fn top_k(values: &[f64], k: usize, descending: bool) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        let ord = if descending { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    idx.into_iter().take(k).map(|i| (i, values[i])).collect()
}

/// The `k` classes attracting the most confusion mass.
pub fn hubs(graph: &ConfusionGraph, k: usize) -> Result<Vec<(usize, f64)>> {
    check_k(k, graph.num_nodes())?;
    graph.warn_if_pruned("hubs");
    Ok(top_k(&degrees(graph).in_degree, k, true))
}

/// The `k` hardest (largest out-degree) or easiest (smallest) classes.
pub fn difficulty_ranking(graph: &ConfusionGraph, k: usize, hardest: bool) -> Result<Vec<(usize, f64)>> {
    check_k(k, graph.num_nodes())?;
    graph.warn_if_pruned("difficulty ranking");
    Ok(top_k(&degrees(graph).out_degree, k, hardest))
}


#[cfg(test)]
mod tests {
    use super::fixtures::two_dicycles;
    use super::*;
    use ndarray::Array2;

    #[test]
    fn dicycle_degrees() {
        let d = degrees(&two_dicycles());
        assert_eq!(d.in_degree, vec![1.0; 4]);
        assert_eq!(d.out_degree, vec![1.0; 4]);
        assert_eq!(d.total, 4.0);
    }

    #[test]
    fn star_in_degree() {
        let mut a = Array2::zeros((4, 4));
        a[[1, 0]] = 0.25;
        a[[2, 0]] = 0.5;
        a[[3, 0]] = 0.125;
        let g = ConfusionGraph::new(a, None).unwrap();
        let d = degrees(&g);
        assert_eq!(d.in_degree[0], 0.875);
        assert_eq!(hubs(&g, 1).unwrap(), vec![(0, 0.875)]);
        let s_in: f64 = d.in_degree.iter().sum();
        let s_out: f64 = d.out_degree.iter().sum();
        assert_eq!(s_in, d.total);
        assert_eq!(s_out, d.total);
    }

    #[test]
    fn hub_ties_break_by_index() {
        let h = hubs(&two_dicycles(), 2).unwrap();
        assert_eq!(h, vec![(0, 1.0), (1, 1.0)]);
        assert!(hubs(&two_dicycles(), 0).is_err());
        assert!(hubs(&two_dicycles(), 5).is_err());
    }

    #[test]
    fn difficulty_orders() {
        let mut a = Array2::zeros((6, 6));
        for i in 0..6 {
            let j = (i + 1) % 6;
            a[[i, j]] = if i == 5 { 0.9 } else { 0.1 };
        }
        let g = ConfusionGraph::new(a, None).unwrap();
        assert_eq!(difficulty_ranking(&g, 1, true).unwrap()[0].0, 5);
        let easy: Vec<usize> = difficulty_ranking(&g, 2, false)
            .unwrap()
            .iter()
            .map(|p| p.0)
            .collect();
        assert_eq!(easy, vec![0, 1]);

        let zero = ConfusionGraph::new(Array2::zeros((5, 5)), None).unwrap();
        let r: Vec<usize> = difficulty_ranking(&zero, 3, true)
            .unwrap()
            .iter()
            .map(|p| p.0)
            .collect();
        assert_eq!(r, vec![0, 1, 2]);
    }
}
