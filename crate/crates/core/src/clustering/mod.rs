//! Patient clustering in a feature space, and ranking of clusters by dose.
//!
//! Three methods are available: k-means (k-means++ seeding, best of several
//! restarts), Ward agglomerative clustering, and a Bayesian Gaussian mixture
//! fitted by MAP-EM and initialized from the k-means solution.
//!
//! Raw cluster indices are arbitrary. Downstream code works with *ranks*:
//! rank 0 is the cluster with the lowest summed organ mean dose.

mod gmm;
mod kmeans;
mod ward;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, FeatureKey};
use crate::error::{Error, Result};
use crate::features::{extract_feature_matrix, FeatureMatrix, FeatureSpec};

pub use ward::Merge;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Kmeans,
    WardHierarchical,
    BayesianGmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceType {
    Diagonal,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub method: ClusterMethod,
    pub k: usize,
    pub seed: u64,
    /// Z-score feature columns before clustering.
    pub standardize: bool,
    pub covariance_type: CovarianceType,
    /// Dirichlet concentration on mixture weights; `None` means `1/k`.
    pub weight_concentration: Option<f64>,
    pub max_iter: usize,
    /// EM stops when the per-row change of the objective drops below this.
    pub tol: f64,
    /// k-means++ restarts (also used for the mixture initialization).
    pub restarts: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            method: ClusterMethod::BayesianGmm,
            k: 3,
            seed: 0,
            standardize: true,
            covariance_type: CovarianceType::Diagonal,
            weight_concentration: None,
            max_iter: 200,
            tol: 1e-5,
            restarts: 10,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("k", format!("need k >= 2 (got {})", self.k)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be positive"));
        }
        if let Some(a) = self.weight_concentration {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::invalid("weight_concentration", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn concentration(&self) -> f64 {
        self.weight_concentration.unwrap_or(1.0 / self.k as f64)
    }
}

/// Method-specific fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Fitted {
    Kmeans {
        centroids: Vec<Vec<f64>>,
        inertia: f64,
    },
    WardHierarchical {
        merges: Vec<Merge>,
    },
    BayesianGmm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<f64>>,
        iterations: usize,
        converged: bool,
        reseeds: usize,
        restarts: usize,
        /// Penalized objective after each E-step of the final EM run.
        objective_trace: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub params: ClusterParams,
    /// Raw cluster index per matrix row.
    pub assignments: Vec<usize>,
    /// `rank_order[raw]` is the dose rank of raw cluster `raw` (0 = lowest dose).
    pub rank_order: Vec<usize>,
    /// Row count per raw cluster.
    pub sizes: Vec<usize>,
    /// Cohort patient index per matrix row.
    pub row_ids: Vec<usize>,
    pub log_likelihood: Option<f64>,
    pub fitted: Fitted,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Rank-canonical label per row.
    pub fn ranked_assignments(&self) -> Vec<usize> {
        self.assignments.iter().map(|&a| self.rank_order[a]).collect()
    }

    /// Row count per rank.
    pub fn ranked_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k()];
        for (raw, &s) in self.sizes.iter().enumerate() {
            out[self.rank_order[raw]] = s;
        }
        out
    }

    /// Rank-canonical label per cohort patient; `None` for patients not in the matrix.
    pub fn patient_ranks(&self, n_patients: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_patients];
        for (&pid, &a) in self.row_ids.iter().zip(&self.assignments) {
            out[pid] = Some(self.rank_order[a]);
        }
        out
    }

    pub fn apply_ranking(&mut self, ranking: &ClusterRanking) {
        self.rank_order = ranking.rank_order.clone();
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub(crate) fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sizes_of(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut s = vec![0; k];
    for &a in assignments {
        s[a] += 1;
    }
    s
}

/// Fits `params` on `matrix`. The returned ranking is the identity until
/// [`rank_clusters`] is applied.
pub fn cluster_cohort(matrix: &FeatureMatrix, params: &ClusterParams) -> Result<ClusterModel> {
    params.validate()?;
    let k = params.k;
    if matrix.n <= k {
        return Err(Error::TooFewRows { rows: matrix.n, k });
    }
    if matrix.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (assignments, log_likelihood, fitted) = match params.method {
        ClusterMethod::Kmeans => {
            let f = kmeans::fit(matrix, k, params.restarts, params.seed, 0);
            let fitted = Fitted::Kmeans {
                centroids: f.centroids,
                inertia: f.inertia,
            };
            (f.assignments, None, fitted)
        }
        ClusterMethod::WardHierarchical => {
            let merges = ward::merge_tree(matrix);
            let labels = ward::cut(&merges, matrix.n, k);
            (labels, None, Fitted::WardHierarchical { merges })
        }
        ClusterMethod::BayesianGmm => {
            let f = gmm::fit(
                matrix,
                &gmm::Options {
                    k,
                    covariance: params.covariance_type,
                    alpha: params.concentration(),
                    max_iter: params.max_iter,
                    tol: params.tol,
                    kmeans_restarts: params.restarts,
                    seed: params.seed,
                },
            )?;
            let fitted = Fitted::BayesianGmm {
                weights: f.weights,
                means: f.means,
                covariances: f.covariances,
                iterations: f.iterations,
                converged: f.converged,
                reseeds: f.reseeds,
                restarts: f.restarts,
                objective_trace: f.objective_trace,
            };
            (f.assignments, Some(f.log_likelihood), fitted)
        }
    };
    let sizes = sizes_of(&assignments, k);
    Ok(ClusterModel {
        params: params.clone(),
        assignments,
        rank_order: (0..k).collect(),
        sizes,
        row_ids: matrix.row_ids.clone(),
        log_likelihood,
        fitted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRanking {
    /// Per raw cluster: sum over spec organs of the cluster's average organ mean dose (Gy).
    pub scores: Vec<f64>,
    /// `rank_order[raw]` = rank, ascending in score.
    pub rank_order: Vec<usize>,
    /// `by_rank[rank]` = raw cluster index.
    pub by_rank: Vec<usize>,
}

/// Scores and ranks the clusters of `model` by raw (unstandardized) organ mean doses.
/// Scores equal to within 1e-9 Gy are ties, broken by raw index.
pub fn rank_clusters(model: &ClusterModel, cohort: &Cohort, spec: &FeatureSpec) -> Result<ClusterRanking> {
    let organs = spec.check_against(cohort)?;
    let k = model.k();
    let mut sums = vec![0.0; k];
    for (&pid, &a) in model.row_ids.iter().zip(&model.assignments) {
        let p = &cohort.patients()[pid];
        for &o in &organs {
            let dose = p.dose(o, FeatureKey::Mean).ok_or_else(|| Error::MissingOrgan {
                patient: p.id.clone(),
                organ: cohort.organs()[o].name().to_string(),
            })?;
            sums[a] += dose;
        }
    }
    let scores: Vec<f64> = sums
        .iter()
        .zip(&model.sizes)
        .map(|(s, &n)| {
            assert!(n > 0, "fitted clusters are never empty");
            s / n as f64
        })
        .collect();
    let mut by_rank: Vec<usize> = (0..k).collect();
    let key = |j: usize| (scores[j] * 1e9).round() as i64;
    by_rank.sort_by_key(|&j| (key(j), j));
    let mut rank_order = vec![0; k];
    for (r, &j) in by_rank.iter().enumerate() {
        rank_order[j] = r;
    }
    Ok(ClusterRanking {
        scores,
        rank_order,
        by_rank,
    })
}

/// Extracts the feature spec's matrix, clusters it, and applies the dose ranking.
pub fn fit_ranked(
    cohort: &Cohort,
    spec: &FeatureSpec,
    params: &ClusterParams,
) -> Result<(FeatureMatrix, ClusterModel)> {
    let matrix = extract_feature_matrix(cohort, spec, params.standardize)?;
    let mut model = cluster_cohort(&matrix, params)?;
    let ranking = rank_clusters(&model, cohort, spec)?;
    model.apply_ranking(&ranking);
    Ok((matrix, model))
}

#[cfg(test)]
mod tests;
