//! One round of forward search: every single-edit neighbor of a feature spec is
//! re-clustered and re-tested, and reported as a change against the current spec.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{fit_ranked, ClusterParams};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::stats::{lrt_clusters, LrtReport, OutcomeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    AddOrgan,
    RemoveOrgan,
    ExtendWindowLow,
    ShrinkWindowLow,
    ExtendWindowHigh,
    ShrinkWindowHigh,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateEdit {
    pub kind: EditKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub organ: Option<String>,
}

impl CandidateEdit {
    fn window(kind: EditKind) -> Self {
        CandidateEdit { kind, organ: None }
    }

    fn organ(kind: EditKind, organ: &str) -> Self {
        CandidateEdit {
            kind,
            organ: Some(organ.to_string()),
        }
    }

    /// Applies the edit. Added organs are placed by their position in `organ_order`,
    /// so removing and re-adding an organ restores a canonical spec.
    pub fn apply(&self, spec: &FeatureSpec, organ_order: &[&str]) -> Result<FeatureSpec> {
        let mut out = spec.clone();
        let w = &mut out.window;
        let organ = || {
            self.organ
                .as_deref()
                .ok_or_else(|| Error::invalid("edit", "organ edits need an organ"))
        };
        match self.kind {
            EditKind::AddOrgan => {
                let name = organ()?;
                if spec.organs.iter().any(|o| o == name) {
                    return Err(Error::invalid("edit", format!("{name} is already in the feature spec")));
                }
                let rank = |o: &str| organ_order.iter().position(|n| *n == o).unwrap_or(usize::MAX);
                let at = out
                    .organs
                    .iter()
                    .position(|o| rank(o) > rank(name))
                    .unwrap_or(out.organs.len());
                out.organs.insert(at, name.to_string());
            }
            EditKind::RemoveOrgan => {
                let name = organ()?;
                let before = out.organs.len();
                out.organs.retain(|o| o != name);
                if out.organs.len() == before {
                    return Err(Error::invalid("edit", format!("{name} is not in the feature spec")));
                }
            }
            EditKind::ExtendWindowLow => w.lo = w.lo.wrapping_sub(5),
            EditKind::ShrinkWindowLow => w.lo += 5,
            EditKind::ExtendWindowHigh => w.hi += 5,
            EditKind::ShrinkWindowHigh => w.hi = w.hi.wrapping_sub(5),
        }
        out.validate()?;
        Ok(out)
    }
}

/// Adds for absent organs (in `organ_list` order), removes for present organs unless
/// only one is left, then the window edits that stay on the grid with lo <= hi.
pub fn enumerate_candidates(spec: &FeatureSpec, organ_list: &[&str]) -> Vec<CandidateEdit> {
    let mut out: Vec<CandidateEdit> = organ_list
        .iter()
        .filter(|o| !spec.organs.iter().any(|s| s == *o))
        .map(|o| CandidateEdit::organ(EditKind::AddOrgan, o))
        .collect();
    if spec.organs.len() > 1 {
        out.extend(spec.organs.iter().map(|o| CandidateEdit::organ(EditKind::RemoveOrgan, o)));
    }
    let w = spec.window;
    if w.lo > 5 {
        out.push(CandidateEdit::window(EditKind::ExtendWindowLow));
    }
    if w.lo < w.hi {
        out.push(CandidateEdit::window(EditKind::ShrinkWindowLow));
    }
    if w.hi < 95 {
        out.push(CandidateEdit::window(EditKind::ExtendWindowHigh));
    }
    if w.lo < w.hi {
        out.push(CandidateEdit::window(EditKind::ShrinkWindowHigh));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Bic,
    Aic,
    P,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bic" => Ok(Metric::Bic),
            "aic" => Ok(Metric::Aic),
            "p" => Ok(Metric::P),
            _ => Err(Error::unknown("metric", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

/// The selected cluster's statistics under one spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecScore {
    pub p_value: f64,
    /// Full-minus-base BIC and AIC for the selected cluster's indicator.
    pub delta_bic: f64,
    pub delta_aic: f64,
    /// Cluster sizes by rank.
    pub sizes: Vec<usize>,
}

impl SpecScore {
    fn from_report(report: &LrtReport, rank: usize, sizes: Vec<usize>) -> Self {
        let c = &report.clusters[rank];
        SpecScore {
            p_value: c.p_value,
            delta_bic: c.delta_bic,
            delta_aic: c.delta_aic,
            sizes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEntry {
    pub edit: CandidateEdit,
    pub status: Status,
    /// Candidate minus current; negative BIC/AIC changes favor the candidate.
    pub delta_bic: Option<f64>,
    pub delta_aic: Option<f64>,
    pub delta_p: Option<f64>,
    pub score: Option<SpecScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EffectEntry {
    pub fn metric(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Bic => self.delta_bic,
            Metric::Aic => self.delta_aic,
            Metric::P => self.delta_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditiveEffectsReport {
    pub spec: FeatureSpec,
    pub selected_cluster: usize,
    pub metric_shown: Metric,
    pub baseline: SpecScore,
    pub entries: Vec<EffectEntry>,
}

impl AdditiveEffectsReport {
    pub const CSV_HEADER: &'static str =
        "kind,organ,status,metric,value,delta_bic,delta_aic,delta_p,p_value,sizes,error";

    pub fn to_csv_string(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let metric = serde_json::to_value(self.metric_shown).unwrap();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let kind = serde_json::to_value(e.edit.kind).unwrap();
            let status = serde_json::to_value(e.status).unwrap();
            let sizes = e
                .score
                .as_ref()
                .map(|s| s.sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                kind.as_str().unwrap(),
                e.edit.organ.as_deref().unwrap_or(""),
                status.as_str().unwrap(),
                metric.as_str().unwrap(),
                opt(e.metric(self.metric_shown)),
                opt(e.delta_bic),
                opt(e.delta_aic),
                opt(e.delta_p),
                opt(e.score.as_ref().map(|s| s.p_value)),
                sizes,
                csv_escape(e.error.as_deref().unwrap_or("")),
            ));
        }
        out
    }
}

pub(crate) fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Serial,
}

pub struct SearchInput<'a> {
    pub cohort: &'a Cohort,
    pub spec: &'a FeatureSpec,
    pub params: &'a ClusterParams,
    pub outcome: &'a OutcomeSpec,
    pub confounders: &'a [String],
    /// Cluster rank whose statistics are tracked; `None` selects the highest-dose rank.
    pub selected_cluster: Option<usize>,
    pub metric: Metric,
}

fn score_spec(input: &SearchInput<'_>, spec: &FeatureSpec, rank: usize) -> Result<SpecScore> {
    let (_, model) = fit_ranked(input.cohort, spec, input.params)?;
    let report = lrt_clusters(input.cohort, &model, input.outcome, input.confounders)?;
    Ok(SpecScore::from_report(&report, rank, model.ranked_sizes()))
}

/// Evaluates every candidate of the (canonicalized) spec with the same clustering
/// parameters and seed. Candidate failures are recorded per entry; a failing
/// baseline aborts.
pub fn evaluate_forward_search(input: &SearchInput<'_>, execution: Execution) -> Result<AdditiveEffectsReport> {
    let organ_names: Vec<&str> = input.cohort.organs().iter().map(|o| o.name()).collect();
    let mut spec = input.spec.clone();
    spec.check_against(input.cohort)?;
    spec.canonicalize(&organ_names);
    let k = input.params.k;
    let rank = input.selected_cluster.unwrap_or(k - 1);
    if rank >= k {
        return Err(Error::invalid(
            "selected_cluster",
            format!("cluster rank {rank} out of range (k = {k})"),
        ));
    }
    let baseline = score_spec(input, &spec, rank)?;
    let candidates = enumerate_candidates(&spec, &organ_names);
    let evaluate = |edit: &CandidateEdit| -> EffectEntry {
        let result = edit
            .apply(&spec, &organ_names)
            .and_then(|s| score_spec(input, &s, rank));
        match result {
            Ok(score) => EffectEntry {
                edit: edit.clone(),
                status: Status::Ok,
                delta_bic: Some(score.delta_bic - baseline.delta_bic),
                delta_aic: Some(score.delta_aic - baseline.delta_aic),
                delta_p: Some(score.p_value - baseline.p_value),
                score: Some(score),
                error: None,
            },
            Err(e) => EffectEntry {
                edit: edit.clone(),
                status: Status::Error,
                delta_bic: None,
                delta_aic: None,
                delta_p: None,
                score: None,
                error: Some(e.to_string()),
            },
        }
    };
    let entries = match execution {
        Execution::Parallel => candidates.par_iter().map(evaluate).collect(),
        Execution::Serial => candidates.iter().map(evaluate).collect(),
    };
    Ok(AdditiveEffectsReport {
        spec,
        selected_cluster: rank,
        metric_shown: input.metric,
        baseline,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_synthetic_cohort, layout, SyntheticConfig};
    use crate::features::Window;

    fn names() -> Vec<String> {
        layout::default_organs().iter().map(|o| o.name().to_string()).collect()
    }

    fn parotid_spec() -> FeatureSpec {
        FeatureSpec::new(
            vec!["Parotid_Ipsi".into(), "Parotid_Contra".into()],
            Window::new(40, 55).unwrap(),
        )
    }

    #[test]
    fn forty_nine_candidates_for_two_organs() {
        let all = names();
        let list: Vec<&str> = all.iter().map(String::as_str).collect();
        let c = enumerate_candidates(&parotid_spec(), &list);
        assert_eq!(c.len(), 49);
        assert_eq!(c.iter().filter(|e| e.kind == EditKind::AddOrgan).count(), 43);
        assert_eq!(c.iter().filter(|e| e.kind == EditKind::RemoveOrgan).count(), 2);
        assert!(!c.contains(&CandidateEdit::organ(EditKind::AddOrgan, "Parotid_Ipsi")));
    }

    #[test]
    fn grid_edges_limit_window_edits() {
        let list = ["Tongue", "Mandible"];
        let mut spec = FeatureSpec::new(vec!["Tongue".into()], Window::new(5, 95).unwrap());
        let c = enumerate_candidates(&spec, &list);
        let kinds: Vec<EditKind> = c.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EditKind::AddOrgan, EditKind::ShrinkWindowLow, EditKind::ShrinkWindowHigh]
        );
        spec.window = Window::new(50, 50).unwrap();
        let kinds: Vec<EditKind> = enumerate_candidates(&spec, &list).iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EditKind::AddOrgan, EditKind::ExtendWindowLow, EditKind::ExtendWindowHigh]
        );
    }

    #[test]
    fn every_candidate_yields_a_valid_distinct_spec() {
        let all = names();
        let list: Vec<&str> = all.iter().map(String::as_str).collect();
        let mut spec = parotid_spec();
        spec.canonicalize(&list);
        for edit in enumerate_candidates(&spec, &list) {
            let next = edit.apply(&spec, &list).unwrap();
            assert!(next.validate().is_ok());
            assert_ne!(next, spec);
        }
    }

    #[test]
    fn remove_then_add_round_trips() {
        let all = names();
        let list: Vec<&str> = all.iter().map(String::as_str).collect();
        let mut spec = FeatureSpec::new(
            vec!["Tongue".into(), "Parotid_Contra".into(), "Mandible".into()],
            Window::new(30, 55).unwrap(),
        );
        spec.canonicalize(&list);
        for organ in spec.organs.clone() {
            let removed = CandidateEdit::organ(EditKind::RemoveOrgan, &organ).apply(&spec, &list).unwrap();
            let back = CandidateEdit::organ(EditKind::AddOrgan, &organ).apply(&removed, &list).unwrap();
            assert_eq!(back, spec);
        }
        let shrunk = CandidateEdit::window(EditKind::ShrinkWindowLow).apply(&spec, &list).unwrap();
        let back = CandidateEdit::window(EditKind::ExtendWindowLow).apply(&shrunk, &list).unwrap();
        assert_eq!(back, spec);
    }

    fn small_input_parts() -> (Cohort, ClusterParams, Vec<String>) {
        let config = SyntheticConfig {
            n_patients: 120,
            organs: layout::default_organs()[..12].to_vec(),
            planted_organs: vec!["Parotid_Ipsi".into()],
            ..SyntheticConfig::default()
        };
        let mut config = config;
        config.outcome.weights.retain(|w| w.organ == "Parotid_Ipsi");
        let cohort = generate_synthetic_cohort(&config, 5).unwrap().cohort;
        let params = ClusterParams {
            restarts: 3,
            ..ClusterParams::default()
        };
        (cohort, params, vec!["chemotherapy".into()])
    }

    #[test]
    fn report_has_one_entry_per_candidate_and_ignores_schedule() {
        let (cohort, params, conf) = small_input_parts();
        let spec = FeatureSpec::new(
            vec!["Cochlea_Ipsi".into(), "Mastoid_Ipsi".into()],
            Window::new(40, 55).unwrap(),
        );
        let outcome = OutcomeSpec::default();
        let input = SearchInput {
            cohort: &cohort,
            spec: &spec,
            params: &params,
            outcome: &outcome,
            confounders: &conf,
            selected_cluster: None,
            metric: Metric::Bic,
        };
        let par = evaluate_forward_search(&input, Execution::Parallel).unwrap();
        let ser = evaluate_forward_search(&input, Execution::Serial).unwrap();
        assert_eq!(par.entries.len(), 10 + 2 + 4);
        assert_eq!(
            serde_json::to_string(&par).unwrap(),
            serde_json::to_string(&ser).unwrap()
        );
        assert_eq!(par.to_csv_string().lines().count(), 1 + par.entries.len());
    }

    #[test]
    fn failing_candidate_is_isolated() {
        let (cohort, params, conf) = small_input_parts();
        // Drop Masseter doses for every severe patient: adding that organ then leaves
        // only non-severe patients, and that candidate's LRT has a single class.
        let outcome = OutcomeSpec::default();
        let labels = crate::stats::binarize_outcome(&cohort, &outcome).unwrap().labels;
        let mandible = cohort.organ_index("Masseter_M_Ipsi").unwrap();
        let patients = cohort
            .patients()
            .iter()
            .zip(&labels)
            .map(|(p, l)| {
                let mut p = p.clone();
                if *l == Some(1) {
                    p.dvh[mandible] = None;
                }
                p
            })
            .collect();
        let cohort = Cohort::new(
            cohort.organs().to_vec(),
            cohort.time_points().to_vec(),
            cohort.symptoms().to_vec(),
            cohort.confounders().to_vec(),
            patients,
            true,
        )
        .unwrap();
        let spec = FeatureSpec::new(vec!["Cochlea_Ipsi".into()], Window::new(40, 55).unwrap());
        let input = SearchInput {
            cohort: &cohort,
            spec: &spec,
            params: &params,
            outcome: &outcome,
            confounders: &conf,
            selected_cluster: None,
            metric: Metric::Bic,
        };
        let report = evaluate_forward_search(&input, Execution::Serial).unwrap();
        let failed: Vec<&EffectEntry> = report.entries.iter().filter(|e| e.status == Status::Error).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].edit, CandidateEdit::organ(EditKind::AddOrgan, "Masseter_M_Ipsi"));
        assert!(failed[0].error.as_deref().unwrap().contains("single class"));
        assert_eq!(report.entries.len(), 11 + 4);

        let input = SearchInput {
            selected_cluster: Some(3),
            ..input
        };
        assert!(evaluate_forward_search(&input, Execution::Serial).is_err());
    }
}
