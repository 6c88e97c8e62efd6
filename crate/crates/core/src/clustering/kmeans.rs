//! Lloyd's algorithm with k-means++ seeding and best-of-restarts selection.

use rand::Rng;
use rayon::prelude::*;

use super::{derived_rng, sq_dist};
use crate::features::FeatureMatrix;

const MAX_LLOYD_ITER: usize = 300;

#[derive(Debug, Clone)]
pub(crate) struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

/// Index of the nearest centroid; ties go to the lower index.
pub(crate) fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(m: &FeatureMatrix, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = m.n;
    let mut centroids = vec![m.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = m.rows().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = m.row(pick).to_vec();
        for (i, r) in m.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(m: &FeatureMatrix, mut centroids: Vec<Vec<f64>>) -> KMeansFit {
    let (n, d, k) = (m.n, m.d, centroids.len());
    let mut assignments = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITER {
        let mut changed = false;
        for (i, r) in m.rows().enumerate() {
            let (j, _) = nearest(r, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        // An empty cluster takes over the point farthest from its own centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = (0..n)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .map(|i| (i, sq_dist(m.row(i), &centroids[assignments[i]])))
                    .fold((usize::MAX, -1.0), |b, c| if c.1 > b.1 { c } else { b });
                if far != usize::MAX {
                    counts[assignments[far]] -= 1;
                    assignments[far] = j;
                    counts[j] = 1;
                    changed = true;
                }
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        for (i, r) in m.rows().enumerate() {
            for (s, x) in sums[assignments[i]].iter_mut().zip(r) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = m
        .rows()
        .zip(&assignments)
        .map(|(r, &a)| sq_dist(r, &centroids[a]))
        .sum();
    KMeansFit {
        centroids,
        assignments,
        inertia,
    }
}

/// Runs `restarts` seeded restarts in parallel and keeps the lowest inertia,
/// ties going to the earliest restart, so the result does not depend on scheduling.
pub(crate) fn fit(m: &FeatureMatrix, k: usize, restarts: usize, seed: u64, stream: u64) -> KMeansFit {
    let fits: Vec<KMeansFit> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = derived_rng(seed, stream + r);
            lloyd(m, plus_plus_init(m, k, &mut rng))
        })
        .collect();
    fits.into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.inertia.total_cmp(&b.inertia).then(ia.cmp(ib)))
        .map(|(_, f)| f)
        .expect("at least one restart")
}
