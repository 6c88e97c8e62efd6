//! Outcome binarization, logistic fits, per-cluster likelihood-ratio tests, and the
//! temporal outcome grid.

mod grid;
mod logistic;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::clustering::ClusterModel;
use crate::cohort::Cohort;
use crate::error::{Error, Result};

pub use grid::{outcome_grid, DateBin, OutcomeGrid, RatingBins};
pub use logistic::{fit_logistic, LogisticFit, SEPARATION_BOUND};

/// Severe means a rating strictly above `threshold` at `time_point`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeSpec {
    pub symptom: String,
    pub time_point: String,
    pub threshold: u8,
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        OutcomeSpec {
            symptom: "drymouth".into(),
            time_point: "6mo_post".into(),
            threshold: 4,
        }
    }
}

impl OutcomeSpec {
    pub fn validate(&self, cohort: &Cohort) -> Result<(usize, usize)> {
        if self.threshold > 9 {
            return Err(Error::invalid(
                "threshold",
                format!("must be in 0..=9 (got {})", self.threshold),
            ));
        }
        Ok((
            cohort.symptom_index(&self.symptom)?,
            cohort.time_point_index(&self.time_point)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryOutcome {
    /// Per cohort patient; `None` when the rating is missing.
    pub labels: Vec<Option<u8>>,
    /// Cohort indices of patients without a rating.
    pub excluded: Vec<usize>,
}

pub fn binarize_outcome(cohort: &Cohort, spec: &OutcomeSpec) -> Result<BinaryOutcome> {
    let (s, t) = spec.validate(cohort)?;
    let labels: Vec<Option<u8>> = cohort
        .patients()
        .iter()
        .map(|p| p.rating(s, t).map(|r| u8::from(r > spec.threshold)))
        .collect();
    let excluded = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.is_none().then_some(i))
        .collect();
    Ok(BinaryOutcome { labels, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    None,
    Reasonable,
    Strong,
}

/// Raftery's reading of a BIC change (negative = the richer model is preferred).
pub fn evidence_label(delta_bic: f64) -> Evidence {
    if delta_bic <= -6.0 {
        Evidence::Strong
    } else if delta_bic <= -2.0 {
        Evidence::Reasonable
    } else {
        Evidence::None
    }
}

pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

pub fn bic(log_likelihood: f64, n_params: usize, n: usize) -> f64 {
    n_params as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

/// Chi-square survival function; negative statistics count as zero.
pub fn chi_square_p(statistic: f64, df: usize) -> f64 {
    let dist = ChiSquared::new(df as f64).expect("df is positive");
    dist.sf(statistic.max(0.0)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub log_likelihood: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub separation: bool,
}

impl ModelSummary {
    fn new(ll: f64, n_params: usize, n: usize, converged: bool, separation: bool) -> Self {
        ModelSummary {
            log_likelihood: ll,
            n_params,
            aic: aic(ll, n_params),
            bic: bic(ll, n_params, n),
            converged,
            separation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterLrt {
    pub rank: usize,
    /// Patients of this cluster in the test sample.
    pub size: usize,
    /// Severe outcomes among them.
    pub events: usize,
    pub coefficient: f64,
    pub odds_ratio: f64,
    pub lr_statistic: f64,
    pub p_value: f64,
    pub aic_base: f64,
    pub aic_full: f64,
    pub bic_base: f64,
    pub bic_full: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
    pub evidence: Evidence,
    pub converged: bool,
    pub separation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrtReport {
    pub symptom: String,
    pub time_point: String,
    pub threshold: u8,
    pub n: usize,
    pub events: usize,
    pub prevalence: f64,
    pub confounders: Vec<String>,
    /// Ids of clustered patients left out for a missing rating.
    pub excluded: Vec<String>,
    pub base: ModelSummary,
    /// One entry per cluster, by rank.
    pub clusters: Vec<ClusterLrt>,
}

impl LrtReport {
    pub const CSV_HEADER: &'static str = "rank,size,events,coefficient,odds_ratio,lr_statistic,p_value,aic_base,aic_full,bic_base,bic_full,delta_aic,delta_bic,evidence,converged,separation,note";

    /// One CSV line per cluster, without the header.
    pub fn csv_rows(&self) -> Vec<String> {
        self.clusters
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    c.rank,
                    c.size,
                    c.events,
                    c.coefficient,
                    c.odds_ratio,
                    c.lr_statistic,
                    c.p_value,
                    c.aic_base,
                    c.aic_full,
                    c.bic_base,
                    c.bic_full,
                    c.delta_aic,
                    c.delta_bic,
                    serde_json::to_value(c.evidence).unwrap().as_str().unwrap(),
                    c.converged,
                    c.separation,
                    c.note.as_deref().unwrap_or("")
                )
            })
            .collect()
    }
}

/// The regression sample: labels, severe flags and confounder values of the
/// clustered patients that have a rating.
pub struct LrtSample {
    pub ranks: Vec<usize>,
    pub y: Vec<u8>,
    /// Row-major confounder values, one row per sample patient.
    pub confounders: Vec<Vec<f64>>,
    pub confounder_names: Vec<String>,
    pub excluded: Vec<String>,
}

impl LrtSample {
    pub fn build(
        cohort: &Cohort,
        model: &ClusterModel,
        outcome: &OutcomeSpec,
        confounders: &[String],
    ) -> Result<LrtSample> {
        let bin = binarize_outcome(cohort, outcome)?;
        let conf_idx: Vec<usize> = confounders
            .iter()
            .map(|c| cohort.confounder_index(c))
            .collect::<Result<_>>()?;
        let ranked = model.ranked_assignments();
        let mut s = LrtSample {
            ranks: Vec::new(),
            y: Vec::new(),
            confounders: Vec::new(),
            confounder_names: confounders.to_vec(),
            excluded: Vec::new(),
        };
        for (&pid, &rank) in model.row_ids.iter().zip(&ranked) {
            let p = &cohort.patients()[pid];
            match bin.labels[pid] {
                Some(label) => {
                    s.ranks.push(rank);
                    s.y.push(label);
                    s.confounders
                        .push(conf_idx.iter().map(|&c| f64::from(p.confounders[c])).collect());
                }
                None => s.excluded.push(p.id.clone()),
            }
        }
        Ok(s)
    }
}

fn column_names(confounders: &[String], extra: &[String]) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(confounders.iter().cloned())
        .chain(extra.iter().cloned())
        .collect()
}

/// One-vs-rest likelihood-ratio tests for every cluster rank, on a prepared sample.
pub fn lrt_on_sample(sample: &LrtSample, k: usize, outcome: &OutcomeSpec) -> Result<LrtReport> {
    let n = sample.y.len();
    let base_rows: Vec<Vec<f64>> = sample
        .confounders
        .iter()
        .map(|c| std::iter::once(1.0).chain(c.iter().copied()).collect())
        .collect();
    let base_names = column_names(&sample.confounder_names, &[]);
    let base_fit = fit_logistic(&base_rows, &base_names, &sample.y)?;
    let base = ModelSummary::new(
        base_fit.log_likelihood,
        base_fit.n_params(),
        n,
        base_fit.converged,
        base_fit.separation,
    );
    let events = sample.y.iter().filter(|&&v| v == 1).count();
    let mut clusters = Vec::with_capacity(k);
    for rank in 0..k {
        let indicator: Vec<f64> = sample.ranks.iter().map(|&r| f64::from(u8::from(r == rank))).collect();
        let size = indicator.iter().filter(|&&v| v == 1.0).count();
        let cluster_events = sample
            .ranks
            .iter()
            .zip(&sample.y)
            .filter(|(&r, &y)| r == rank && y == 1)
            .count();
        let rows: Vec<Vec<f64>> = base_rows
            .iter()
            .zip(&indicator)
            .map(|(r, &v)| r.iter().copied().chain([v]).collect())
            .collect();
        let names = column_names(&sample.confounder_names, &[format!("cluster_{rank}")]);
        let p_full = base.n_params + 1;
        let (ll_full, coefficient, converged, separation, note) =
            match fit_logistic(&rows, &names, &sample.y) {
                Ok(f) => (
                    f.log_likelihood,
                    *f.coefficients.last().unwrap(),
                    f.converged,
                    f.separation,
                    None,
                ),
                // The indicator adds nothing the base model lacks: same fit, one more parameter.
                Err(Error::RankDeficient { .. }) => (
                    base.log_likelihood,
                    0.0,
                    base.converged,
                    base.separation,
                    Some("cluster indicator is collinear with the base model".to_string()),
                ),
                Err(e) => return Err(e),
            };
        let lr = 2.0 * (ll_full - base.log_likelihood);
        let aic_full = aic(ll_full, p_full);
        let bic_full = bic(ll_full, p_full, n);
        // Written as differences so equal likelihoods give exactly the parameter penalty.
        let delta_aic = 2.0 - 2.0 * (ll_full - base.log_likelihood);
        let delta_bic = (n as f64).ln() - 2.0 * (ll_full - base.log_likelihood);
        clusters.push(ClusterLrt {
            rank,
            size,
            events: cluster_events,
            coefficient,
            odds_ratio: coefficient.exp(),
            lr_statistic: lr,
            p_value: chi_square_p(lr, 1),
            aic_base: base.aic,
            aic_full,
            bic_base: base.bic,
            bic_full,
            delta_aic,
            delta_bic,
            evidence: evidence_label(delta_bic),
            converged,
            separation,
            note,
        });
    }
    Ok(LrtReport {
        symptom: outcome.symptom.clone(),
        time_point: outcome.time_point.clone(),
        threshold: outcome.threshold,
        n,
        events,
        prevalence: events as f64 / n as f64,
        confounders: sample.confounder_names.clone(),
        excluded: sample.excluded.clone(),
        base,
        clusters,
    })
}

/// Base model: intercept + confounders. For each cluster rank, the full model adds
/// a one-vs-rest indicator and is compared with the base by a df=1 LRT.
pub fn lrt_clusters(
    cohort: &Cohort,
    model: &ClusterModel,
    outcome: &OutcomeSpec,
    confounders: &[String],
) -> Result<LrtReport> {
    let sample = LrtSample::build(cohort, model, outcome, confounders)?;
    lrt_on_sample(&sample, model.k(), outcome)
}

/// All clusters as one k-level factor (rank 0 as reference) tested jointly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorLrt {
    pub df: usize,
    pub lr_statistic: f64,
    pub p_value: f64,
    /// Odds ratio of each rank against rank 0; the first entry is 1.
    pub odds_ratios: Vec<f64>,
    pub delta_aic: f64,
    pub delta_bic: f64,
    pub evidence: Evidence,
    pub separation: bool,
}

pub fn lrt_factor(
    cohort: &Cohort,
    model: &ClusterModel,
    outcome: &OutcomeSpec,
    confounders: &[String],
) -> Result<FactorLrt> {
    let sample = LrtSample::build(cohort, model, outcome, confounders)?;
    let k = model.k();
    let n = sample.y.len();
    let base_rows: Vec<Vec<f64>> = sample
        .confounders
        .iter()
        .map(|c| std::iter::once(1.0).chain(c.iter().copied()).collect())
        .collect();
    let base = fit_logistic(&base_rows, &column_names(&sample.confounder_names, &[]), &sample.y)?;
    let dummies: Vec<String> = (1..k).map(|r| format!("cluster_{r}")).collect();
    let rows: Vec<Vec<f64>> = base_rows
        .iter()
        .zip(&sample.ranks)
        .map(|(row, &rank)| {
            row.iter()
                .copied()
                .chain((1..k).map(|r| f64::from(u8::from(rank == r))))
                .collect()
        })
        .collect();
    let full = fit_logistic(&rows, &column_names(&sample.confounder_names, &dummies), &sample.y)?;
    let lr = 2.0 * (full.log_likelihood - base.log_likelihood);
    let df = k - 1;
    let dll = full.log_likelihood - base.log_likelihood;
    let delta_bic = df as f64 * (n as f64).ln() - 2.0 * dll;
    let offset = base.n_params();
    Ok(FactorLrt {
        df,
        lr_statistic: lr,
        p_value: chi_square_p(lr, df),
        odds_ratios: std::iter::once(1.0)
            .chain(full.coefficients[offset..].iter().map(|b| b.exp()))
            .collect(),
        delta_aic: 2.0 * df as f64 - 2.0 * dll,
        delta_bic,
        evidence: evidence_label(delta_bic),
        separation: full.separation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub threshold: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<LrtReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs [`lrt_clusters`] at each threshold, in input order. A failing threshold
/// records its error and does not stop the others.
pub fn lrt_threshold_sweep(
    cohort: &Cohort,
    model: &ClusterModel,
    symptom: &str,
    time_point: &str,
    thresholds: &[u8],
    confounders: &[String],
) -> Vec<ThresholdResult> {
    thresholds
        .iter()
        .map(|&t| {
            let outcome = OutcomeSpec {
                symptom: symptom.to_string(),
                time_point: time_point.to_string(),
                threshold: t,
            };
            match lrt_clusters(cohort, model, &outcome, confounders) {
                Ok(r) => ThresholdResult {
                    threshold: t,
                    report: Some(r),
                    error: None,
                },
                Err(e) => ThresholdResult {
                    threshold: t,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
