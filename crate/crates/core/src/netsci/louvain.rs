//! Greedy multilevel modularity maximization for directed weighted graphs.
//!
//! Each pass first refines the current partition by single-node moves on the
//! original graph, then repeatedly aggregates communities into supernodes
//! and moves supernodes, until no level changes. Passes repeat until one
//! fails to raise Q by more than `min_gain`.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::modularity::{aggregate_matrix, modularity_matrix, renumber};
use crate::confusion::ConfusionGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    pub membership: Vec<usize>,
    pub num_communities: usize,
    pub modularity: f64,
    pub total_weight: f64,
    pub seed: u64,
}

impl CommunityPartition {
    pub fn members(&self, community: usize) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&i| self.membership[i] == community)
            .collect()
    }
}

// Upper bound on sweeps within one local-moving phase; every accepted move
// raises Q by more than min_gain, so this only guards against float drift.
const MAX_SWEEPS: usize = 10_000;

struct LocalMover<'a> {
    adj: &'a Array2<f64>,
    t: f64,
    in_deg: Vec<f64>,
    out_deg: Vec<f64>,
    min_gain: f64,
}

impl<'a> LocalMover<'a> {
    fn new(adj: &'a Array2<f64>, t: f64, min_gain: f64) -> Self {
        LocalMover {
            adj,
            t,
            in_deg: adj.columns().into_iter().map(|c| c.sum()).collect(),
            out_deg: adj.rows().into_iter().map(|r| r.sum()).collect(),
            min_gain,
        }
    }

    /// Moves single nodes to the community with the best modularity gain
    /// until no move gains more than `min_gain`. Returns whether anything moved.
    fn run(&self, membership: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
        let n = membership.len();
        let t = self.t;
        let mut comm_in = vec![0.0; n];
        let mut comm_out = vec![0.0; n];
        let mut size = vec![0usize; n];
        for i in 0..n {
            comm_in[membership[i]] += self.in_deg[i];
            comm_out[membership[i]] += self.out_deg[i];
            size[membership[i]] += 1;
        }
        let mut links = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut order: Vec<usize> = (0..n).collect();
        let mut any_moved = false;

        for _ in 0..MAX_SWEEPS {
            order.shuffle(rng);
            let mut moved = false;
            for &i in &order {
                let own = membership[i];
                comm_in[own] -= self.in_deg[i];
                comm_out[own] -= self.out_deg[i];
                size[own] -= 1;

                for (j, &c) in membership.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let w = self.adj[[i, j]] + self.adj[[j, i]];
                    if w != 0.0 {
                        if links[c] == 0.0 {
                            touched.push(c);
                        }
                        links[c] += w;
                    }
                }

                // Gain of joining c relative to standing alone.
                let gain = |c: usize, links: &[f64]| {
                    links[c] / t - (self.in_deg[i] * comm_out[c] + comm_in[c] * self.out_deg[i]) / (t * t)
                };
                let stay = gain(own, &links);

                let mut candidates = touched.clone();
                candidates.push(own);
                if size[own] > 0 {
                    // standing alone in a fresh community
                    if let Some(empty) = size.iter().position(|&s| s == 0) {
                        candidates.push(empty);
                    }
                }
                candidates.sort_unstable();
                candidates.dedup();
                let mut best = own;
                let mut best_gain = f64::NEG_INFINITY;
                for &c in &candidates {
                    let g = gain(c, &links);
                    if g > best_gain {
                        best_gain = g;
                        best = c;
                    }
                }
                let target = if best != own && best_gain - stay > self.min_gain {
                    moved = true;
                    best
                } else {
                    own
                };
                membership[i] = target;
                comm_in[target] += self.in_deg[i];
                comm_out[target] += self.out_deg[i];
                size[target] += 1;

                for &c in &touched {
                    links[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
            any_moved = true;
        }
        any_moved
    }
}

/// Detects communities by greedy directed modularity maximization.
/// Deterministic for a given seed; the reported Q is recomputed on `graph`.
pub fn detect_communities(
    graph: &ConfusionGraph,
    seed: u64,
    min_gain: f64,
    max_passes: usize,
) -> Result<CommunityPartition> {
    graph.warn_if_pruned("community detection");
    let adj = &graph.adjacency;
    let n = adj.nrows();
    let t = adj.sum();
    if !(t > 0.0) {
        return Err(Error::NoEdges);
    }
    if !(min_gain >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "min_gain must be nonnegative, got {min_gain}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = LocalMover::new(adj, t, min_gain);

    let mut membership: Vec<usize> = (0..n).collect();
    let (mut q, _) = modularity_matrix(adj, &membership)?;

    for _ in 0..max_passes {
        let mut candidate = membership.clone();
        base.run(&mut candidate, &mut rng);
        let (mut candidate, mut k) = renumber(&candidate);

        loop {
            let coarse = aggregate_matrix(adj, &candidate, k);
            let mut coarse_membership: Vec<usize> = (0..k).collect();
            let moved = LocalMover::new(&coarse, t, min_gain).run(&mut coarse_membership, &mut rng);
            if !moved {
                break;
            }
            let composed: Vec<usize> = candidate.iter().map(|&c| coarse_membership[c]).collect();
            (candidate, k) = renumber(&composed);
        }

        let (q_new, _) = modularity_matrix(adj, &candidate)?;
        if q_new > q {
            membership = candidate;
        }
        if q_new <= q + min_gain {
            break;
        }
        q = q_new;
    }

    let (membership, num_communities) = renumber(&membership);
    let (modularity, total_weight) = modularity_matrix(adj, &membership)?;
    Ok(CommunityPartition {
        membership,
        num_communities,
        modularity,
        total_weight,
        seed,
    })
}
