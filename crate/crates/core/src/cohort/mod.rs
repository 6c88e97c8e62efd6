//! Patient and cohort data model, file ingestion, and the synthetic generator.

mod dvh;
mod io;
pub mod layout;
mod synthetic;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dvh::{vx_from_dose_samples, FeatureKey, OrganDvh, VX_LEVELS};
pub use io::{load_cohort, save_cohort, CohortFormat, LoadOptions, OrderedMap, PatientDoc};
pub use synthetic::{
    generate_synthetic_cohort, ConfounderConfig, OutcomeLinkConfig, OrganWeight, SyntheticCohort,
    SyntheticConfig,
};

/// Ratings are reported on a 0-10 scale.
pub const MAX_RATING: u8 = 10;

/// Baseline, the seven treatment weeks, then the two follow-up visits.
pub const DEFAULT_TIME_POINTS: [&str; 10] = [
    "baseline", "wk1", "wk2", "wk3", "wk4", "wk5", "wk6", "wk7", "6wk_post", "6mo_post",
];

/// The 28 MDASI head-and-neck items.
pub const DEFAULT_SYMPTOMS: [&str; 28] = [
    "pain",
    "fatigue",
    "nausea",
    "sleep",
    "distress",
    "shortness_of_breath",
    "memory",
    "appetite",
    "drowsy",
    "drymouth",
    "sad",
    "vomit",
    "numbness",
    "activity",
    "mood",
    "work",
    "relations",
    "walking",
    "enjoy",
    "mucus",
    "swallow",
    "choke",
    "voice",
    "skin",
    "constipation",
    "taste",
    "mucositis",
    "teeth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Ipsilateral,
    Contralateral,
    Midline,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrganId {
    name: String,
    laterality: Laterality,
}

impl OrganId {
    pub fn new(name: impl Into<String>, laterality: Laterality) -> Self {
        OrganId {
            name: name.into(),
            laterality,
        }
    }

    /// Looks the laterality up in the shipped layout.
    pub fn named(name: impl Into<String>) -> Self {
        let name = name.into();
        let laterality = layout::laterality_of(&name);
        OrganId { name, laterality }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn laterality(&self) -> Laterality {
        self.laterality
    }
}

/// Ratings of one symptom, aligned with the cohort's time points.
#[derive(Debug, Clone, PartialEq)]
pub struct SymptomSeries {
    pub symptom: String,
    pub ratings: Vec<Option<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub id: String,
    /// Aligned with the cohort organ list; `None` marks missing dose data.
    pub dvh: Vec<Option<OrganDvh>>,
    /// Aligned with the cohort symptom list.
    pub symptoms: Vec<SymptomSeries>,
    /// Aligned with the cohort confounder list; each value is 0 or 1.
    pub confounders: Vec<u8>,
}

impl Patient {
    pub fn dose(&self, organ: usize, key: FeatureKey) -> Option<f64> {
        self.dvh[organ].as_ref().map(|d| d.get(key))
    }

    pub fn rating(&self, symptom: usize, time_point: usize) -> Option<u8> {
        self.symptoms[symptom].ratings[time_point]
    }
}

/// An immutable, validated cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    organs: Vec<OrganId>,
    time_points: Vec<String>,
    symptoms: Vec<String>,
    confounders: Vec<String>,
    patients: Vec<Patient>,
}

fn check_unique<'a>(what: &str, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(Error::invalid(what, "names must be non-empty"));
        }
        if !seen.insert(name) {
            return Err(Error::invalid(what, format!("duplicate name {name:?}")));
        }
    }
    Ok(())
}

impl Cohort {
    /// Validates and assembles a cohort. With `allow_missing`, patients may lack
    /// dose data for some organs; otherwise every organ must be present.
    pub fn new(
        organs: Vec<OrganId>,
        time_points: Vec<String>,
        symptoms: Vec<String>,
        confounders: Vec<String>,
        patients: Vec<Patient>,
        allow_missing: bool,
    ) -> Result<Self> {
        if organs.is_empty() {
            return Err(Error::invalid("organs", "organ list is empty"));
        }
        if patients.is_empty() {
            return Err(Error::invalid("patients", "cohort has no patients"));
        }
        check_unique("organs", organs.iter().map(|o| o.name()))?;
        check_unique("time_points", time_points.iter().map(String::as_str))?;
        check_unique("symptoms", symptoms.iter().map(String::as_str))?;
        check_unique("confounders", confounders.iter().map(String::as_str))?;

        let mut ids = HashSet::new();
        for p in &patients {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::DuplicatePatient(p.id.clone()));
            }
            if p.dvh.len() != organs.len() {
                return Err(Error::Schema {
                    location: format!("patient {}", p.id),
                    message: format!("expected {} organs, found {}", organs.len(), p.dvh.len()),
                });
            }
            for (organ, dvh) in organs.iter().zip(&p.dvh) {
                match dvh {
                    Some(d) => d.validate(&p.id, organ.name())?,
                    None if allow_missing => {}
                    None => {
                        return Err(Error::MissingOrgan {
                            patient: p.id.clone(),
                            organ: organ.name().to_string(),
                        })
                    }
                }
            }
            if p.symptoms.len() != symptoms.len() {
                return Err(Error::Schema {
                    location: format!("patient {}", p.id),
                    message: format!(
                        "expected {} symptom series, found {}",
                        symptoms.len(),
                        p.symptoms.len()
                    ),
                });
            }
            for (name, series) in symptoms.iter().zip(&p.symptoms) {
                if &series.symptom != name || series.ratings.len() != time_points.len() {
                    return Err(Error::Schema {
                        location: format!("patient {} symptom {}", p.id, series.symptom),
                        message: "symptom series does not match the cohort schema".into(),
                    });
                }
                for (t, r) in time_points.iter().zip(&series.ratings) {
                    if let Some(r) = r {
                        if *r > MAX_RATING {
                            return Err(Error::RatingOutOfRange {
                                patient: p.id.clone(),
                                field: format!("sym__{name}__{t}"),
                                value: *r as i64,
                            });
                        }
                    }
                }
            }
            if p.confounders.len() != confounders.len() {
                return Err(Error::Schema {
                    location: format!("patient {}", p.id),
                    message: "confounder values do not match the cohort schema".into(),
                });
            }
            for (name, v) in confounders.iter().zip(&p.confounders) {
                if *v > 1 {
                    return Err(Error::Schema {
                        location: format!("conf__{name}"),
                        message: format!("confounders are binary; patient {} has {v}", p.id),
                    });
                }
            }
        }
        Ok(Cohort {
            organs,
            time_points,
            symptoms,
            confounders,
            patients,
        })
    }

    pub fn organs(&self) -> &[OrganId] {
        &self.organs
    }

    pub fn time_points(&self) -> &[String] {
        &self.time_points
    }

    pub fn symptoms(&self) -> &[String] {
        &self.symptoms
    }

    pub fn confounders(&self) -> &[String] {
        &self.confounders
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn organ_index(&self, name: &str) -> Result<usize> {
        self.organs
            .iter()
            .position(|o| o.name() == name)
            .ok_or_else(|| Error::unknown("organ", name))
    }

    pub fn symptom_index(&self, name: &str) -> Result<usize> {
        self.symptoms
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::unknown("symptom", name))
    }

    pub fn time_point_index(&self, name: &str) -> Result<usize> {
        self.time_points
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::unknown("time point", name))
    }

    pub fn confounder_index(&self, name: &str) -> Result<usize> {
        self.confounders
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::unknown("confounder", name))
    }

    pub fn patient_index(&self, id: &str) -> Option<usize> {
        self.patients.iter().position(|p| p.id == id)
    }

    /// A copy with patients reordered: patient `i` of the result is `self[order[i]]`.
    pub fn permuted(&self, order: &[usize]) -> Cohort {
        let mut c = self.clone();
        c.patients = order.iter().map(|&i| self.patients[i].clone()).collect();
        c
    }
}
