use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::ConfusionGraph;
use crate::dataset::GroupAssignment;
use crate::error::{Error, Result};

/// Group-size-normalized mixing matrix, rescaled so its entries sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    pub grouping_name: String,
    pub entries: Array2<f64>,
    /// Sum of the size-normalized entries before rescaling.
    pub raw_total: f64,
}

impl AssociationMatrix {
    pub fn num_groups(&self) -> usize {
        self.entries.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssortativityCategory {
    High,
    Moderate,
    Weak,
    Disassortative,
}

impl std::fmt::Display for AssortativityCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AssortativityCategory::High => "high",
            AssortativityCategory::Moderate => "moderate",
            AssortativityCategory::Weak => "weak",
            AssortativityCategory::Disassortative => "disassortative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativityResult {
    pub r: f64,
    pub grouping_name: String,
    pub category: AssortativityCategory,
}

pub fn association_matrix(graph: &ConfusionGraph, grouping: &GroupAssignment) -> Result<AssociationMatrix> {
    let n = graph.num_nodes();
    if grouping.num_classes() != n {
        return Err(Error::DimensionMismatch(format!(
            "grouping {:?} covers {} classes, graph has {n} nodes",
            grouping.name,
            grouping.num_classes()
        )));
    }
    graph.warn_if_pruned("assortativity");
    let m = grouping.num_groups();
    let mut raw = Array2::<f64>::zeros((m, m));
    for ((i, j), &w) in graph.adjacency.indexed_iter() {
        raw[[grouping.membership[i], grouping.membership[j]]] += w;
    }
    let sizes = grouping.group_sizes();
    for ((u, v), e) in raw.indexed_iter_mut() {
        *e /= (sizes[u] * sizes[v]) as f64;
    }
    let raw_total = raw.sum();
    if !(raw_total > 0.0) {
        return Err(Error::NoConfusions);
    }
    Ok(AssociationMatrix {
        grouping_name: grouping.name.clone(),
        entries: raw / raw_total,
        raw_total,
    })
}

/// `r = (Tr E - ||E||_F^2) / (1 - ||E||_F^2)`.
pub fn assortativity(e: &AssociationMatrix) -> Result<AssortativityResult> {
    let trace: f64 = e.entries.diag().sum();
    let frob_sq: f64 = e.entries.iter().map(|v| v * v).sum();
    let denom = 1.0 - frob_sq;
    if denom.abs() <= f64::EPSILON {
        return Err(Error::DegenerateGrouping);
    }
    let r = (trace - frob_sq) / denom;
    Ok(AssortativityResult {
        r,
        grouping_name: e.grouping_name.clone(),
        category: interpret_assortativity(r),
    })
}

pub fn interpret_assortativity(r: f64) -> AssortativityCategory {
    if r > 0.7 {
        AssortativityCategory::High
    } else if r > 0.25 {
        AssortativityCategory::Moderate
    } else if r < -0.25 {
        AssortativityCategory::Disassortative
    } else {
        AssortativityCategory::Weak
    }
}

/// Uniformly random class-to-group assignment with the given group sizes.
pub fn random_grouping(num_classes: usize, group_sizes: &[usize], seed: u64) -> Result<GroupAssignment> {
    let sum: usize = group_sizes.iter().sum();
    if sum != num_classes {
        return Err(Error::GroupSizeMismatch { sum, num_classes });
    }
    if group_sizes.is_empty() || group_sizes.contains(&0) {
        return Err(Error::InvalidArgument("group sizes must be positive".into()));
    }
    let mut classes: Vec<usize> = (0..num_classes).collect();
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut membership = vec![0; num_classes];
    let mut start = 0;
    for (g, &size) in group_sizes.iter().enumerate() {
        for &c in &classes[start..start + size] {
            membership[c] = g;
        }
        start += size;
    }
    let groups = (0..group_sizes.len()).map(|g| format!("random_{g}")).collect();
    GroupAssignment::new(format!("random_seed{seed}"), groups, membership)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn matrix(entries: Array2<f64>) -> AssociationMatrix {
        AssociationMatrix {
            grouping_name: "t".into(),
            entries,
            raw_total: 1.0,
        }
    }

    #[test]
    fn singleton_groups_single_edge() {
        let g = ConfusionGraph::new(array![[0.0, 1.0], [0.0, 0.0]], None).unwrap();
        let grouping = GroupAssignment::new("s", vec!["a".into(), "b".into()], vec![0, 1]).unwrap();
        let e = association_matrix(&g, &grouping).unwrap();
        assert_eq!(e.entries, array![[0.0, 1.0], [0.0, 0.0]]);
    }

    #[test]
    fn size_normalization() {
        let mut a = Array2::zeros((3, 3));
        a[[0, 1]] = 1.0;
        a[[1, 0]] = 1.0;
        a[[0, 2]] = 1.0;
        let g = ConfusionGraph::new(a, None).unwrap();
        let grouping = GroupAssignment::new("p", vec!["x".into(), "y".into()], vec![0, 0, 1]).unwrap();
        let e = association_matrix(&g, &grouping).unwrap();
        assert_eq!(e.raw_total, 1.0);
        assert_eq!(e.entries, array![[0.5, 0.5], [0.0, 0.0]]);
    }

    #[test]
    fn zero_adjacency_errors() {
        let g = ConfusionGraph::new(Array2::zeros((2, 2)), None).unwrap();
        let grouping = GroupAssignment::new("s", vec!["a".into(), "b".into()], vec![0, 1]).unwrap();
        assert!(matches!(
            association_matrix(&g, &grouping),
            Err(Error::NoConfusions)
        ));
    }

    #[test]
    fn anchors() {
        let r = |e| assortativity(&matrix(e)).unwrap().r;
        assert!((r(array![[0.5, 0.0], [0.0, 0.5]]) - 1.0).abs() < 1e-12);
        assert!((r(array![[0.25, 0.25], [0.25, 0.25]]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((r(array![[0.0, 0.5], [0.5, 0.0]]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_is_degenerate() {
        assert!(matches!(
            assortativity(&matrix(array![[1.0]])),
            Err(Error::DegenerateGrouping)
        ));
        assert!(matches!(
            assortativity(&matrix(array![[0.0, 1.0], [0.0, 0.0]])),
            Err(Error::DegenerateGrouping)
        ));
    }

    #[test]
    fn interpretation_bands() {
        assert_eq!(interpret_assortativity(0.8), AssortativityCategory::High);
        assert_eq!(interpret_assortativity(0.7), AssortativityCategory::Moderate);
        assert_eq!(interpret_assortativity(0.5), AssortativityCategory::Moderate);
        assert_eq!(interpret_assortativity(0.25), AssortativityCategory::Weak);
        assert_eq!(interpret_assortativity(-0.25), AssortativityCategory::Weak);
        assert_eq!(
            interpret_assortativity(-0.3),
            AssortativityCategory::Disassortative
        );
    }

    #[test]
    fn random_grouping_sizes_and_determinism() {
        let g = random_grouping(100, &[70, 30], 3).unwrap();
        assert_eq!(g.group_sizes(), vec![70, 30]);
        assert_eq!(g, random_grouping(100, &[70, 30], 3).unwrap());
        assert_ne!(
            g.membership,
            random_grouping(100, &[70, 30], 4).unwrap().membership
        );
        assert!(matches!(
            random_grouping(100, &[50, 51], 0),
            Err(Error::GroupSizeMismatch {
                sum: 101,
                num_classes: 100
            })
        ));
    }
}
