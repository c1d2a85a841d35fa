use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::confusion::ConfusionGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModularityCategory {
    /// Q > 0.3
    Meaningful,
    /// 0 <= Q <= 0.3
    Weak,
    /// Q < 0
    WeakerThanRandom,
}

impl std::fmt::Display for ModularityCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModularityCategory::Meaningful => "meaningful",
            ModularityCategory::Weak => "weak",
            ModularityCategory::WeakerThanRandom => "weaker-than-random",
        })
    }
}

pub fn interpret_modularity(q: f64) -> ModularityCategory {
    if q > 0.3 {
        ModularityCategory::Meaningful
    } else if q < 0.0 {
        ModularityCategory::WeakerThanRandom
    } else {
        ModularityCategory::Weak
    }
}

/// Relabels community ids to 0.. in order of first appearance.
/// Returns the new membership and the number of communities.
pub fn renumber(membership: &[usize]) -> (Vec<usize>, usize) {
    let max = membership.iter().copied().max().map_or(0, |m| m + 1);
    let mut map = vec![usize::MAX; max];
    let mut next = 0;
    let out = membership
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect();
    (out, next)
}

/// Collapses nodes into communities, summing all edge weights between them
/// (intra-community mass becomes a self-loop). `membership` must use ids
/// in `0..num_communities`.
pub fn aggregate_matrix(
    adjacency: &Array2<f64>,
    membership: &[usize],
    num_communities: usize,
) -> Array2<f64> {
    let mut out = Array2::zeros((num_communities, num_communities));
    for ((i, j), &w) in adjacency.indexed_iter() {
        if w != 0.0 {
            out[[membership[i], membership[j]]] += w;
        }
    }
    out
}

pub(crate) fn modularity_matrix(adjacency: &Array2<f64>, membership: &[usize]) -> Result<(f64, f64)> {
    let n = adjacency.nrows();
    if membership.len() != n {
        return Err(Error::InvalidArgument(format!(
            "membership covers {} of {n} nodes",
            membership.len()
        )));
    }
    let t = adjacency.sum();
    if !(t > 0.0) {
        return Err(Error::NoEdges);
    }
    let (membership, k) = renumber(membership);
    let mut within = 0.0;
    let mut in_sum = vec![0.0; k];
    let mut out_sum = vec![0.0; k];
    for ((i, j), &w) in adjacency.indexed_iter() {
        if membership[i] == membership[j] {
            within += w;
        }
        // w contributes to out(i) and in(j)
        out_sum[membership[i]] += w;
        in_sum[membership[j]] += w;
    }
    // Summing in(i) * out(j) over ordered same-community pairs factorizes
    // into per-community in-sum times out-sum.
    let null: f64 = in_sum.iter().zip(&out_sum).map(|(a, b)| a * b).sum();
    Ok(((within - null / t) / t, t))
}

/// Directed modularity of a partition; returns `(Q, t)` with `t` the total
/// edge weight. Self-loops count as same-community pairs.
pub fn modularity(graph: &ConfusionGraph, membership: &[usize]) -> Result<(f64, f64)> {
    graph.warn_if_pruned("modularity");
    modularity_matrix(&graph.adjacency, membership)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsci::degrees;
    use crate::netsci::fixtures::two_dicycles;

    /// Literal double sum over ordered pairs.
    fn direct(g: &ConfusionGraph, m: &[usize]) -> f64 {
        let d = degrees(g);
        let t = d.total;
        let n = g.num_nodes();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if m[i] == m[j] {
                    q += g.adjacency[[i, j]] - d.in_degree[i] * d.out_degree[j] / t;
                }
            }
        }
        q / t
    }

    #[test]
    fn all_in_one_is_zero() {
        let g = two_dicycles();
        assert_eq!(modularity(&g, &[0, 0, 0, 0]).unwrap(), (0.0, 4.0));
    }

    #[test]
    fn two_dicycles_planted() {
        let g = two_dicycles();
        let (q, t) = modularity(&g, &[0, 0, 1, 1]).unwrap();
        assert_eq!(q, 0.5);
        assert_eq!(t, 4.0);
        assert_eq!(direct(&g, &[0, 0, 1, 1]), 0.5);
    }

    #[test]
    fn singletons_match_closed_form() {
        let mut a = Array2::zeros((4, 4));
        a[[0, 1]] = 0.3;
        a[[1, 2]] = 0.2;
        a[[2, 0]] = 0.7;
        a[[3, 0]] = 0.1;
        a[[0, 3]] = 0.4;
        let g = ConfusionGraph::new(a, None).unwrap();
        let d = degrees(&g);
        let t = d.total;
        let expected: f64 = -(0..4).map(|i| d.in_degree[i] * d.out_degree[i]).sum::<f64>() / (t * t);
        let (q, _) = modularity(&g, &[0, 1, 2, 3]).unwrap();
        assert!((q - expected).abs() < 1e-15);
        assert!((q - direct(&g, &[0, 1, 2, 3])).abs() < 1e-15);
        assert!(q <= 0.0);
    }

    #[test]
    fn zero_graph_errors() {
        let g = ConfusionGraph::new(Array2::zeros((3, 3)), None).unwrap();
        assert!(matches!(modularity(&g, &[0, 1, 2]), Err(Error::NoEdges)));
    }

    #[test]
    fn thresholds() {
        assert_eq!(interpret_modularity(0.35), ModularityCategory::Meaningful);
        assert_eq!(interpret_modularity(0.3), ModularityCategory::Weak);
        assert_eq!(interpret_modularity(0.0), ModularityCategory::Weak);
        assert_eq!(interpret_modularity(-0.1), ModularityCategory::WeakerThanRandom);
    }

    #[test]
    fn renumber_first_appearance() {
        assert_eq!(renumber(&[5, 2, 5, 0]), (vec![0, 1, 0, 2], 3));
    }
}
