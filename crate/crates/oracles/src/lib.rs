//! Slow, obviously-correct reference computations.
//!
//! Nothing in here depends on the engine crate. Each function is written
//! straight from the textbook definition so that engine results can be
//! checked against an independent route.

use std::collections::HashMap;

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let pairs = |m: f64| m * (m - 1.0) / 2.0;
    let index: f64 = table.values().map(|&m| pairs(m)).sum();
    let sum_rows: f64 = rows.values().map(|&m| pairs(m)).sum();
    let sum_cols: f64 = cols.values().map(|&m| pairs(m)).sum();
    let expected = sum_rows * sum_cols / pairs(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-15 {
        // Both labelings trivial (a single cluster each): perfect agreement.
        return if (index - expected).abs() < 1e-15 { 1.0 } else { 0.0 };
    }
    (index - expected) / (max_index - expected)
}

/// Mean silhouette coefficient with Euclidean distance.
pub fn mean_silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let dist = |i: usize, j: usize| -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let clusters: Vec<usize> = {
        let mut c = labels.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut own = (0.0, 0usize);
        let mut nearest = f64::INFINITY;
        for &c in &clusters {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c && j != i).collect();
            let sum: f64 = members.iter().map(|&j| dist(i, j)).sum();
            if c == labels[i] {
                own = (sum, members.len());
            } else if !members.is_empty() {
                nearest = nearest.min(sum / members.len() as f64);
            }
        }
        if own.1 == 0 {
            continue;
        }
        let a = own.0 / own.1 as f64;
        let s = (nearest - a) / a.max(nearest);
        total += s;
    }
    total / n as f64
}

/// Largest dose `d` among the samples such that at least `x` percent of the
/// samples are `>= d`. Checks every candidate threshold.
pub fn vx_brute_force(samples: &[f64], x: u32) -> f64 {
    let n = samples.len();
    let mut best = f64::NEG_INFINITY;
    for &d in samples {
        let count = samples.iter().filter(|&&s| s >= d).count();
        // count / n >= x / 100, compared in integers
        if count * 100 >= x as usize * n && d > best {
            best = d;
        }
    }
    best
}

/// Shannon entropy (bits) of a binary variable with `ones` successes in `n`.
pub fn binary_entropy(ones: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = ones as f64 / n as f64;
    let mut h = 0.0;
    for q in [p, 1.0 - p] {
        if q > 0.0 {
            h -= q * q.log2();
        }
    }
    h
}

/// Mutual information in bits from the joint counts, `H(Y) - sum_s p(s) H(Y|s)`.
pub fn mutual_information_bits(split: &[bool], target: &[bool]) -> f64 {
    let n = split.len();
    let ones = target.iter().filter(|&&t| t).count();
    let mut conditional = 0.0;
    for side in [true, false] {
        let members: Vec<bool> = split
            .iter()
            .zip(target)
            .filter(|(s, _)| **s == side)
            .map(|(_, t)| *t)
            .collect();
        let pos = members.iter().filter(|&&t| t).count();
        conditional += members.len() as f64 / n as f64 * binary_entropy(pos, members.len());
    }
    binary_entropy(ones, n) - conditional
}

/// Log-likelihood of a logistic model, written directly from the Bernoulli density.
pub fn logistic_log_likelihood(rows: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(x, &yi)| {
            let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum()
}

/// Maximum-likelihood logistic coefficients by damped gradient ascent.
///
/// The step is `1/L` with `L = 0.25 * sum_i |x_i|^2`, an upper bound on the
/// curvature of the log-likelihood, so every step is an ascent step. Returns
/// `None` if the gradient does not vanish within the iteration budget.
pub fn logistic_gradient_ascent(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let p = rows[0].len();
    let lipschitz: f64 = 0.25 * rows.iter().flatten().map(|v| v * v).sum::<f64>();
    let step = 1.0 / lipschitz;
    let mut beta = vec![0.0; p];
    for _ in 0..20_000_000 {
        let mut g = vec![0.0; p];
        for (x, &yi) in rows.iter().zip(y) {
            let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            for j in 0..p {
                g[j] += (yi - mu) * x[j];
            }
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-11 {
            return Some(beta);
        }
        for j in 0..p {
            beta[j] += step * g[j];
        }
    }
    None
}

/// One candidate feature for the exhaustive rule oracle.
#[derive(Debug, Clone)]
pub struct OracleFeature {
    /// Features sharing a group (organ) may not appear together in a rule set.
    pub group: usize,
    pub values: Vec<f64>,
    pub thresholds: Vec<f64>,
}

/// Best mutual information over every AND-conjunction of `value >= threshold`
/// splits where each split uses a distinct group, each split individually has
/// support `>= min_support` and solo MI `>= min_solo_mi`, the conjunction has
/// support `>= min_support`, and the conjunction has at most `max_rules` splits.
///
/// Returns 0 when no split qualifies.
pub fn exhaustive_rule_search(
    features: &[OracleFeature],
    target: &[bool],
    min_support: usize,
    min_solo_mi: f64,
    max_rules: usize,
) -> f64 {
    let mut pool: Vec<(usize, Vec<bool>)> = Vec::new();
    for f in features {
        for &t in &f.thresholds {
            let mask: Vec<bool> = f.values.iter().map(|&v| v >= t).collect();
            let support = mask.iter().filter(|&&m| m).count();
            if support >= min_support && mutual_information_bits(&mask, target) >= min_solo_mi {
                pool.push((f.group, mask));
            }
        }
    }
    let mut best = 0.0f64;
    let n = target.len();
    let mut chosen: Vec<usize> = Vec::new();
    fn recurse(
        pool: &[(usize, Vec<bool>)],
        start: usize,
        chosen: &mut Vec<usize>,
        current: &[bool],
        target: &[bool],
        min_support: usize,
        max_rules: usize,
        best: &mut f64,
    ) {
        for i in start..pool.len() {
            if chosen.iter().any(|&c| pool[c].0 == pool[i].0) {
                continue;
            }
            let next: Vec<bool> = current.iter().zip(&pool[i].1).map(|(a, b)| *a && *b).collect();
            if next.iter().filter(|&&m| m).count() < min_support {
                continue;
            }
            let mi = mutual_information_bits(&next, target);
            if mi > *best {
                *best = mi;
            }
            if chosen.len() + 1 < max_rules {
                chosen.push(i);
                recurse(pool, i + 1, chosen, &next, target, min_support, max_rules, best);
                chosen.pop();
            }
        }
    }
    recurse(
        &pool,
        0,
        &mut chosen,
        &vec![true; n],
        target,
        min_support,
        max_rules,
        &mut best,
    );
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_identical_and_permuted() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [2, 2, 0, 0, 1, 1];
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_known_value() {
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) == 0.5714285714285715
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]);
        assert!((v - 0.571_428_571_428_571_5).abs() < 1e-12);
    }

    #[test]
    fn vx_examples() {
        let s: Vec<f64> = (1..=10).map(|i| 10.0 * i as f64).collect();
        assert_eq!(vx_brute_force(&s, 50), 60.0);
        assert_eq!(vx_brute_force(&s, 95), 10.0);
    }

    #[test]
    fn mi_hand_value() {
        let mi = mutual_information_bits(&[true, false, false, false], &[true, true, false, false]);
        assert!((mi - 0.311_278_124_459_132_8).abs() < 1e-12);
    }

    #[test]
    fn gradient_ascent_two_by_two() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (x, yi, count) in [(1.0, 1.0, 30), (1.0, 0.0, 10), (0.0, 1.0, 10), (0.0, 0.0, 30)] {
            for _ in 0..count {
                rows.push(vec![1.0, x]);
                y.push(yi);
            }
        }
        let beta = logistic_gradient_ascent(&rows, &y).unwrap();
        assert!((beta[1] - 9f64.ln()).abs() < 1e-8);
    }
}
