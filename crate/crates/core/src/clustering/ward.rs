//! Agglomerative clustering with Ward linkage.

use serde::{Deserialize, Serialize};

use super::sq_dist;
use crate::features::FeatureMatrix;

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step `s` gets id `n + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Ward distance: sqrt(2 * increase in within-cluster sum of squares).
    pub distance: f64,
    pub size: usize,
}

/// Builds the full merge tree with the Lance-Williams update on squared distances.
/// Ties merge the lexicographically smallest pair of active slots.
pub(crate) fn merge_tree(m: &FeatureMatrix) -> Vec<Merge> {
    let n = m.n;
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(m.row(i), m.row(j));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let row = &dist[i * n..(i + 1) * n];
            for j in i + 1..n {
                if active[j] && row[j] < best.2 {
                    best = (i, j, row[j]);
                }
            }
        }
        let (a, b, dab) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for c in 0..n {
            if !active[c] || c == a || c == b {
                continue;
            }
            let nc = size[c] as f64;
            let v = ((na + nc) * dist[a * n + c] + (nb + nc) * dist[b * n + c] - nc * dab)
                / (na + nb + nc);
            dist[a * n + c] = v;
            dist[c * n + a] = v;
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge {
            left: id[a].min(id[b]),
            right: id[a].max(id[b]),
            distance: dab.max(0.0).sqrt(),
            size: size[a],
        });
        id[a] = n + step;
    }
    merges
}

/// Labels from the first `n - k` merges. Clusters are numbered by their smallest row.
pub(crate) fn cut(merges: &[Merge], n: usize, k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, mg) in merges.iter().take(n - k).enumerate() {
        let node = n + s;
        let l = find(&mut parent, mg.left);
        let r = find(&mut parent, mg.right);
        parent[l] = node;
        parent[r] = node;
    }
    let mut label_of_root = std::collections::HashMap::new();
    (0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = label_of_root.len();
            *label_of_root.entry(root).or_insert(next)
        })
        .collect()
}
