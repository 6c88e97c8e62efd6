//! Analysis state plus the rendered views shared by the CLI and the HTTP service.
//!
//! Both front ends turn a request into a [`View`] and ask a [`Workbench`] for its
//! body, so a batch file and an API response for the same inputs are the same bytes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clustering::{fit_ranked, ClusterMethod, ClusterModel, ClusterParams};
use crate::cohort::{Cohort, FeatureKey, PatientDoc, VX_LEVELS};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSpec, Pca, Window};
use crate::rules::{
    evaluate_ruleset_masked, mine_rules_masked, Metrics, MinerConfig, Rule, RuleScope, Stratum, TraceEntry,
};
use crate::search::{evaluate_forward_search, AdditiveEffectsReport, Execution, Metric, SearchInput};
use crate::stats::{
    binarize_outcome, lrt_threshold_sweep, outcome_grid, LrtReport, OutcomeGrid, OutcomeSpec, RatingBins,
    ThresholdResult,
};
use crate::util::quantile_sorted;

/// Outcome definition, confounders, and the cluster the views focus on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeSelection {
    pub symptom: String,
    pub time_point: String,
    /// Severe means a rating strictly above this value.
    pub threshold: u8,
    pub confounders: Vec<String>,
    /// Cluster rank; `None` means the highest-dose cluster.
    pub selected_cluster: Option<usize>,
}

impl Default for OutcomeSelection {
    fn default() -> Self {
        let o = OutcomeSpec::default();
        OutcomeSelection {
            symptom: o.symptom,
            time_point: o.time_point,
            threshold: o.threshold,
            confounders: Vec::new(),
            selected_cluster: None,
        }
    }
}

impl OutcomeSelection {
    pub fn outcome_spec(&self) -> OutcomeSpec {
        OutcomeSpec {
            symptom: self.symptom.clone(),
            time_point: self.time_point.clone(),
            threshold: self.threshold,
        }
    }

    pub fn selected_rank(&self, k: usize) -> Result<usize> {
        let rank = self.selected_cluster.unwrap_or(k - 1);
        if rank >= k {
            return Err(Error::invalid(
                "selected_cluster",
                format!("cluster rank {rank} out of range (k = {k})"),
            ));
        }
        Ok(rank)
    }

    pub fn validate(&self, cohort: &Cohort, k: usize) -> Result<()> {
        self.outcome_spec().validate(cohort)?;
        for c in &self.confounders {
            cohort.confounder_index(c)?;
        }
        self.selected_rank(k).map(|_| ())
    }
}

/// Everything that determines the analysis besides the cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    pub spec: FeatureSpec,
    #[serde(default)]
    pub params: ClusterParams,
    #[serde(default)]
    pub outcome: OutcomeSelection,
}

impl Analysis {
    /// All cohort organs over the default window, default parameters and outcome.
    pub fn default_for(cohort: &Cohort) -> Analysis {
        Analysis {
            spec: FeatureSpec::new(
                cohort.organs().iter().map(|o| o.name().to_string()).collect(),
                Window::default(),
            ),
            params: ClusterParams::default(),
            outcome: OutcomeSelection::default(),
        }
    }

    pub fn validate(&self, cohort: &Cohort) -> Result<()> {
        self.spec.check_against(cohort)?;
        self.params.validate()?;
        self.outcome.validate(cohort, self.params.k)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::invalid("format", format!("expected json or csv, got {s:?}"))),
        }
    }
}

/// A scatterplot axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Axis {
    /// 1-based principal component of the clustering feature matrix.
    DosePc(usize),
    /// 1-based principal component of all symptom ratings.
    SymptomPc(usize),
    Dose { organ: String, feature: FeatureKey },
    Rating { symptom: String, time_point: String },
    Confounder(String),
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::DosePc(i) => write!(f, "dose_pc{i}"),
            Axis::SymptomPc(i) => write!(f, "symptom_pc{i}"),
            Axis::Dose { organ, feature } => write!(f, "dose:{organ}:{feature}"),
            Axis::Rating { symptom, time_point } => write!(f, "rating:{symptom}:{time_point}"),
            Axis::Confounder(c) => write!(f, "confounder:{c}"),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    /// `dose_pcN`, `symptom_pcN`, `dose:ORGAN:KEY`, `rating:SYMPTOM:TIME`, `confounder:NAME`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("axis", format!("cannot parse axis {s:?}"));
        let pc = |rest: &str| match rest.parse::<usize>() {
            Ok(i) if i >= 1 => Ok(i),
            _ => Err(bad()),
        };
        if let Some(rest) = s.strip_prefix("dose_pc") {
            return pc(rest).map(Axis::DosePc);
        }
        if let Some(rest) = s.strip_prefix("symptom_pc") {
            return pc(rest).map(Axis::SymptomPc);
        }
        let parts: Vec<&str> = s.splitn(3, ':').collect();
        match parts.as_slice() {
            ["dose", organ, key] => Ok(Axis::Dose {
                organ: organ.to_string(),
                feature: key.parse()?,
            }),
            ["rating", symptom, tp] => Ok(Axis::Rating {
                symptom: symptom.to_string(),
                time_point: tp.to_string(),
            }),
            ["confounder", name] => Ok(Axis::Confounder(name.to_string())),
            _ => Err(bad()),
        }
    }
}

/// What the rule miner explains.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum RuleTarget {
    /// Membership of a cluster rank; `None` uses the selected cluster.
    Cluster(Option<usize>),
    /// The binarized outcome.
    #[default]
    Outcome,
}

impl fmt::Display for RuleTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleTarget::Cluster(None) => f.write_str("cluster"),
            RuleTarget::Cluster(Some(r)) => write!(f, "cluster:{r}"),
            RuleTarget::Outcome => f.write_str("outcome"),
        }
    }
}

impl FromStr for RuleTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outcome" => Ok(RuleTarget::Outcome),
            "cluster" => Ok(RuleTarget::Cluster(None)),
            _ => s
                .strip_prefix("cluster:")
                .and_then(|r| r.parse().ok())
                .map(|r| RuleTarget::Cluster(Some(r)))
                .ok_or_else(|| Error::invalid("target", format!("expected cluster, cluster:N or outcome, got {s:?}"))),
        }
    }
}

impl Serialize for RuleTarget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RuleTarget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeChoice {
    /// The current feature spec's organs and keys.
    #[default]
    Spec,
    AllFeatures,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesRequest {
    pub target: RuleTarget,
    pub config: MinerConfig,
    pub scope: ScopeChoice,
}

/// A renderable result.
#[derive(Debug, Clone, PartialEq)]
pub enum View {
    /// The fitted cluster model.
    Model,
    Clusters,
    /// LRT sweep; `None` uses the outcome's own threshold.
    Lrt { thresholds: Option<Vec<u8>>, format: Format },
    /// `None` gives one date bin per time point.
    OutcomeGrid { date_bins: Option<usize> },
    AdditiveEffects { metric: Metric, format: Format },
    Scatter { x: Axis, y: Axis },
    Patient(String),
    Rules(RulesRequest),
}

/// A rendered response body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Body {
    pub content_type: &'static str,
    pub text: String,
}

/// Pretty JSON with a trailing newline, the encoding of every JSON body.
pub fn json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

impl Body {
    pub fn json<T: Serialize>(value: &T) -> Result<Body> {
        Ok(Body {
            content_type: "application/json",
            text: json_text(value)?,
        })
    }

    fn csv(text: String) -> Body {
        Body {
            content_type: "text/csv",
            text,
        }
    }
}

/// The clustering matrix and its ranked model.
#[derive(Debug, Clone)]
pub struct Fit {
    pub matrix: FeatureMatrix,
    pub model: ClusterModel,
}

/// A cohort with one analysis state and memoized results.
///
/// A workbench is immutable apart from its caches; changing the analysis builds
/// a new workbench at the next revision.
#[derive(Debug)]
pub struct Workbench {
    cohort: Arc<Cohort>,
    analysis: Analysis,
    revision: u64,
    execution: Execution,
    fit: OnceLock<Arc<Fit>>,
    bodies: Mutex<HashMap<String, Arc<Body>>>,
}

impl Workbench {
    pub fn new(cohort: Arc<Cohort>, analysis: Analysis) -> Result<Workbench> {
        analysis.validate(&cohort)?;
        Ok(Workbench {
            cohort,
            analysis,
            revision: 0,
            execution: Execution::Parallel,
            fit: OnceLock::new(),
            bodies: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Workbench {
        self.execution = execution;
        self
    }

    pub fn cohort(&self) -> &Arc<Cohort> {
        &self.cohort
    }

    pub fn analysis(&self) -> &Analysis {
        &self.analysis
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// A fresh workbench at the next revision; caches are dropped.
    pub fn revise(&self, analysis: Analysis) -> Result<Workbench> {
        analysis.validate(&self.cohort)?;
        Ok(Workbench {
            cohort: Arc::clone(&self.cohort),
            analysis,
            revision: self.revision + 1,
            execution: self.execution,
            fit: OnceLock::new(),
            bodies: Mutex::new(HashMap::new()),
        })
    }

    /// The ranked cluster model of the current spec and parameters (computed once).
    pub fn fit(&self) -> Result<Arc<Fit>> {
        if let Some(f) = self.fit.get() {
            return Ok(Arc::clone(f));
        }
        let (matrix, model) = fit_ranked(&self.cohort, &self.analysis.spec, &self.analysis.params)?;
        let _ = self.fit.set(Arc::new(Fit { matrix, model }));
        Ok(Arc::clone(self.fit.get().expect("just set")))
    }

    /// Renders `view`, reusing an earlier rendering of the same view.
    pub fn render(&self, view: &View) -> Result<Arc<Body>> {
        let key = format!("{view:?}");
        if let Some(b) = self.bodies.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(b));
        }
        let body = Arc::new(self.compute(view)?);
        self.bodies
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&body));
        Ok(body)
    }

    fn compute(&self, view: &View) -> Result<Body> {
        match view {
            View::Model => Body::json(&self.fit()?.model),
            View::Clusters => Body::json(&self.clusters()?),
            View::Lrt { thresholds, format } => {
                let sweep = self.lrt(thresholds.as_deref())?;
                match format {
                    Format::Json => Body::json(&sweep),
                    Format::Csv => Ok(Body::csv(sweep.to_csv_string())),
                }
            }
            View::OutcomeGrid { date_bins } => Body::json(&self.outcome_grid(*date_bins)?),
            View::AdditiveEffects { metric, format } => {
                let report = self.additive_effects(*metric)?;
                match format {
                    Format::Json => Body::json(&report),
                    Format::Csv => Ok(Body::csv(report.to_csv_string())),
                }
            }
            View::Scatter { x, y } => Body::json(&self.scatter(x, y)?),
            View::Patient(id) => Body::json(&self.patient(id)?),
            View::Rules(req) => Body::json(&self.rules(req)?),
        }
    }

    pub fn clusters(&self) -> Result<ClustersView> {
        let fit = self.fit()?;
        clusters_view(&self.cohort, &fit.model)
    }

    pub fn lrt(&self, thresholds: Option<&[u8]>) -> Result<LrtSweep> {
        let fit = self.fit()?;
        let o = &self.analysis.outcome;
        o.outcome_spec().validate(&self.cohort)?;
        let own = [o.threshold];
        let thresholds = thresholds.unwrap_or(&own);
        if thresholds.is_empty() {
            return Err(Error::invalid("thresholds", "need at least one threshold"));
        }
        if let Some(t) = thresholds.iter().find(|&&t| t > crate::cohort::MAX_RATING) {
            return Err(Error::invalid("thresholds", format!("threshold {t} exceeds the rating scale")));
        }
        Ok(LrtSweep {
            symptom: o.symptom.clone(),
            time_point: o.time_point.clone(),
            results: lrt_threshold_sweep(&self.cohort, &fit.model, &o.symptom, &o.time_point, thresholds, &o.confounders),
        })
    }

    pub fn outcome_grid(&self, date_bins: Option<usize>) -> Result<OutcomeGrid> {
        let fit = self.fit()?;
        let o = &self.analysis.outcome;
        let rank = o.selected_rank(fit.model.k())?;
        let bins = date_bins.unwrap_or(self.cohort.time_points().len());
        outcome_grid(&self.cohort, &fit.model, rank, &o.symptom, bins, &RatingBins::default())
    }

    pub fn additive_effects(&self, metric: Metric) -> Result<AdditiveEffectsReport> {
        let o = &self.analysis.outcome;
        let outcome = o.outcome_spec();
        let input = SearchInput {
            cohort: &self.cohort,
            spec: &self.analysis.spec,
            params: &self.analysis.params,
            outcome: &outcome,
            confounders: &o.confounders,
            selected_cluster: o.selected_cluster,
            metric,
        };
        evaluate_forward_search(&input, self.execution)
    }

    pub fn scatter(&self, x: &Axis, y: &Axis) -> Result<ScatterView> {
        let fit = self.fit()?;
        let n = self.cohort.len();
        let xs = self.axis_values(x, &fit)?;
        let ys = self.axis_values(y, &fit)?;
        let ranks = fit.model.patient_ranks(n);
        let o = &self.analysis.outcome;
        let s = self.cohort.symptom_index(&o.symptom)?;
        let points = self
            .cohort
            .patients()
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let (px, py) = (xs.values[i]?, ys.values[i]?);
                Some(ScatterPoint {
                    patient: p.id.clone(),
                    x: px,
                    y: py,
                    cluster: ranks[i],
                    ratings: p.symptoms[s].ratings.clone(),
                })
            })
            .collect();
        Ok(ScatterView {
            x: xs.info,
            y: ys.info,
            symptom: o.symptom.clone(),
            time_points: self.cohort.time_points().to_vec(),
            points,
        })
    }

    fn axis_values(&self, axis: &Axis, fit: &Fit) -> Result<AxisValues> {
        let n = self.cohort.len();
        let patients = self.cohort.patients();
        let mut explained = None;
        let values: Vec<Option<f64>> = match axis {
            Axis::DosePc(c) => {
                let pca = Pca::fit(&fit.matrix)?;
                let proj = pca.project(&fit.matrix, c - 1)?;
                explained = Some(pca.explained[c - 1]);
                let mut v = vec![None; n];
                for (&pid, x) in fit.matrix.row_ids.iter().zip(proj) {
                    v[pid] = Some(x);
                }
                v
            }
            Axis::SymptomPc(c) => {
                let m = symptom_matrix(&self.cohort)?;
                let pca = Pca::fit(&m)?;
                explained = Some(pca.explained[(c - 1).min(pca.explained.len() - 1)]);
                pca.project(&m, c - 1)?.into_iter().map(Some).collect()
            }
            Axis::Dose { organ, feature } => {
                let o = self.cohort.organ_index(organ)?;
                patients.iter().map(|p| p.dose(o, *feature)).collect()
            }
            Axis::Rating { symptom, time_point } => {
                let s = self.cohort.symptom_index(symptom)?;
                let t = self.cohort.time_point_index(time_point)?;
                patients.iter().map(|p| p.rating(s, t).map(f64::from)).collect()
            }
            Axis::Confounder(name) => {
                let c = self.cohort.confounder_index(name)?;
                patients.iter().map(|p| Some(f64::from(p.confounders[c]))).collect()
            }
        };
        Ok(AxisValues {
            info: AxisInfo {
                axis: axis.to_string(),
                explained,
            },
            values,
        })
    }

    pub fn patient(&self, id: &str) -> Result<PatientDoc> {
        let i = self
            .cohort
            .patient_index(id)
            .ok_or_else(|| Error::unknown("patient", id))?;
        Ok(self.cohort.patient_document(i))
    }

    pub fn rules(&self, req: &RulesRequest) -> Result<RulesView> {
        req.config.validate()?;
        let n = self.cohort.len();
        let target: Vec<Option<u8>> = match req.target {
            RuleTarget::Outcome => binarize_outcome(&self.cohort, &self.analysis.outcome.outcome_spec())?.labels,
            RuleTarget::Cluster(rank) => {
                let fit = self.fit()?;
                let k = fit.model.k();
                let rank = match rank {
                    Some(r) if r >= k => {
                        return Err(Error::invalid("target", format!("cluster rank {r} out of range (k = {k})")))
                    }
                    Some(r) => r,
                    None => self.analysis.outcome.selected_rank(k)?,
                };
                fit.model
                    .patient_ranks(n)
                    .into_iter()
                    .map(|r| r.map(|r| u8::from(r == rank)))
                    .collect()
            }
        };
        let scope = match req.scope {
            ScopeChoice::Spec => RuleScope::Spec(self.analysis.spec.clone()),
            ScopeChoice::AllFeatures => RuleScope::AllFeatures,
        };
        let mined = mine_rules_masked(&self.cohort, &target, &scope, &req.config)?;
        let rulesets = mined
            .rulesets
            .iter()
            .map(|set| {
                let eval = evaluate_ruleset_masked(&set.rules, &self.cohort, &target)?;
                Ok(RuleSetView {
                    rules: set.rules.clone(),
                    metrics: eval.metrics,
                    strata: eval.strata,
                    remaining: eval.remaining,
                    trace: eval.trace,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RulesView {
            target: req.target,
            scope: req.scope,
            config: req.config.clone(),
            n: mined.n,
            positives: mined.positives,
            pool_size: mined.pool_size,
            diagnostic: mined.diagnostic,
            rulesets,
        })
    }
}

/// Ratings of every symptom at every time point, one row per patient. Missing
/// ratings take their column's observed mean (0 when the column is empty).
fn symptom_matrix(cohort: &Cohort) -> Result<FeatureMatrix> {
    let (s_len, t_len) = (cohort.symptoms().len(), cohort.time_points().len());
    let mut sums = vec![(0.0, 0usize); s_len * t_len];
    for p in cohort.patients() {
        for (s, series) in p.symptoms.iter().enumerate() {
            for (t, r) in series.ratings.iter().enumerate() {
                if let Some(r) = r {
                    let cell = &mut sums[s * t_len + t];
                    cell.0 += f64::from(*r);
                    cell.1 += 1;
                }
            }
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .map(|&(sum, c)| if c == 0 { 0.0 } else { sum / c as f64 })
        .collect();
    let rows: Vec<Vec<f64>> = cohort
        .patients()
        .iter()
        .map(|p| {
            (0..s_len * t_len)
                .map(|j| {
                    p.symptoms[j / t_len].ratings[j % t_len].map_or(means[j], f64::from)
                })
                .collect()
        })
        .collect();
    FeatureMatrix::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrtSweep {
    pub symptom: String,
    pub time_point: String,
    pub results: Vec<ThresholdResult>,
}

impl LrtSweep {
    /// Rows of every threshold's report, prefixed with the threshold; a failed
    /// threshold gets one row carrying its error.
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("threshold,{},error\n", LrtReport::CSV_HEADER);
        let empty = ",".repeat(LrtReport::CSV_HEADER.matches(',').count());
        for r in &self.results {
            match (&r.report, &r.error) {
                (Some(report), _) => {
                    for row in report.csv_rows() {
                        out.push_str(&format!("{},{row},\n", r.threshold));
                    }
                }
                (None, e) => {
                    let e = crate::search::csv_escape(e.as_deref().unwrap_or(""));
                    out.push_str(&format!("{},{empty},{e}\n", r.threshold));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientCluster {
    pub patient: String,
    pub cluster: usize,
}

/// 20%, 50% and 80% quantiles of a cluster's values; `None` without data.
pub type Quantiles = Option<[f64; 3]>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrganQuantiles {
    pub organ: String,
    /// Quantiles of the organ's mean dose, one entry per cluster rank.
    pub clusters: Vec<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvhCurves {
    pub organ: String,
    /// `clusters[rank][level]`: quantiles of VX at `levels[level]`.
    pub clusters: Vec<Vec<Quantiles>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClustersView {
    pub k: usize,
    pub method: ClusterMethod,
    /// Patients per cluster rank (0 = lowest dose).
    pub sizes: Vec<usize>,
    pub log_likelihood: Option<f64>,
    pub assignments: Vec<PatientCluster>,
    /// Patients left out of the feature matrix for missing organ data.
    pub unclustered: Vec<String>,
    pub levels: Vec<u8>,
    pub dose_quantiles: Vec<OrganQuantiles>,
    pub dvh_curves: Vec<DvhCurves>,
}

fn quantiles(mut v: Vec<f64>) -> Quantiles {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some([0.2, 0.5, 0.8].map(|q| quantile_sorted(&v, q)))
}

pub fn clusters_view(cohort: &Cohort, model: &ClusterModel) -> Result<ClustersView> {
    let k = model.k();
    let ranks = model.patient_ranks(cohort.len());
    let patients = cohort.patients();
    let members: Vec<Vec<usize>> = (0..k)
        .map(|r| (0..cohort.len()).filter(|&i| ranks[i] == Some(r)).collect())
        .collect();
    let collect = |o: usize, key: FeatureKey, rank: usize| -> Vec<f64> {
        members[rank]
            .iter()
            .filter_map(|&i| patients[i].dose(o, key))
            .collect()
    };
    let mut dose_quantiles = Vec::new();
    let mut dvh_curves = Vec::new();
    for (o, organ) in cohort.organs().iter().enumerate() {
        dose_quantiles.push(OrganQuantiles {
            organ: organ.name().to_string(),
            clusters: (0..k).map(|r| quantiles(collect(o, FeatureKey::Mean, r))).collect(),
        });
        dvh_curves.push(DvhCurves {
            organ: organ.name().to_string(),
            clusters: (0..k)
                .map(|r| {
                    VX_LEVELS
                        .iter()
                        .map(|&x| quantiles(collect(o, FeatureKey::V(x), r)))
                        .collect()
                })
                .collect(),
        });
    }
    Ok(ClustersView {
        k,
        method: model.params.method,
        sizes: model.ranked_sizes(),
        log_likelihood: model.log_likelihood,
        assignments: ranks
            .iter()
            .zip(patients)
            .filter_map(|(r, p)| {
                r.map(|cluster| PatientCluster {
                    patient: p.id.clone(),
                    cluster,
                })
            })
            .collect(),
        unclustered: ranks
            .iter()
            .zip(patients)
            .filter(|(r, _)| r.is_none())
            .map(|(_, p)| p.id.clone())
            .collect(),
        levels: VX_LEVELS.to_vec(),
        dose_quantiles,
        dvh_curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisInfo {
    pub axis: String,
    /// Explained-variance share, for principal-component axes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explained: Option<f64>,
}

struct AxisValues {
    info: AxisInfo,
    values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub patient: String,
    pub x: f64,
    pub y: f64,
    /// Cluster rank; `None` for patients outside the feature matrix.
    pub cluster: Option<usize>,
    /// The outcome symptom's rating at each time point (glyph ticks).
    pub ratings: Vec<Option<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterView {
    pub x: AxisInfo,
    pub y: AxisInfo,
    pub symptom: String,
    pub time_points: Vec<String>,
    /// Patients with a value on both axes.
    pub points: Vec<ScatterPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleSetView {
    pub rules: Vec<Rule>,
    pub metrics: Metrics,
    /// One stratum per rule (patients first failing it), then the pass stratum.
    pub strata: Vec<Stratum>,
    /// Patients satisfying the first `i` rules.
    pub remaining: Vec<usize>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RulesView {
    pub target: RuleTarget,
    pub scope: ScopeChoice,
    pub config: MinerConfig,
    pub n: usize,
    pub positives: usize,
    pub pool_size: usize,
    pub diagnostic: Option<String>,
    pub rulesets: Vec<RuleSetView>,
}

#[cfg(test)]
mod tests;
