//! Synthetic cohorts with planted dose groups and a known dose-to-outcome link.
//!
//! Every patient belongs to one of `n_groups` planted groups. Planted organs receive
//! a patient-level dose `group_base_dose + g * group_separation` (plus Gaussian
//! spread); the other organs get an organ-specific background level. Voxel doses are
//! drawn around that level and reduced to DVH features. The outcome symptom at the
//! outcome time point is severe with probability
//! `logistic(intercept + sum_o w_o * z_o + sum_c effect_c * conf_c)`, where `z_o`
//! is the cohort-standardized mean dose of organ `o`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    layout, Cohort, OrganDvh, OrganId, Patient, SymptomSeries, DEFAULT_SYMPTOMS,
    DEFAULT_TIME_POINTS, MAX_RATING,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganWeight {
    pub organ: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeLinkConfig {
    pub symptom: String,
    pub time_point: String,
    /// Severe means rating strictly above this value.
    pub threshold: u8,
    pub intercept: f64,
    pub weights: Vec<OrganWeight>,
}

impl Default for OutcomeLinkConfig {
    fn default() -> Self {
        OutcomeLinkConfig {
            symptom: "drymouth".into(),
            time_point: "6mo_post".into(),
            threshold: 4,
            intercept: -0.5,
            weights: default_planted()
                .into_iter()
                .map(|organ| OrganWeight { organ, weight: 0.5 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderConfig {
    pub name: String,
    pub prevalence: f64,
    /// Additive log-odds of a severe outcome when the confounder is present.
    #[serde(default)]
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_patients: usize,
    pub organs: Vec<OrganId>,
    pub time_points: Vec<String>,
    pub symptoms: Vec<String>,
    pub n_groups: usize,
    /// Relative group sizes; equal when absent.
    pub group_weights: Option<Vec<f64>>,
    pub planted_organs: Vec<String>,
    pub group_base_dose: f64,
    pub group_separation: f64,
    /// Standard deviation (Gy) of the patient-level dose within a planted group.
    pub group_spread: f64,
    /// Background organ levels are drawn uniformly from this range (Gy).
    pub background_dose_range: [f64; 2],
    pub background_spread: f64,
    pub voxels_per_organ: usize,
    /// Log-scale standard deviation of voxel doses around the organ level.
    pub voxel_heterogeneity: f64,
    pub outcome: OutcomeLinkConfig,
    pub confounders: Vec<ConfounderConfig>,
    /// Probability that any single rating is left missing.
    pub rating_missing_rate: f64,
}

fn default_planted() -> Vec<String> {
    ["Parotid_Ipsi", "Parotid_Contra", "Submandibular_Ipsi", "Submandibular_Contra"]
        .map(String::from)
        .to_vec()
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_patients: 349,
            organs: layout::default_organs(),
            time_points: DEFAULT_TIME_POINTS.map(String::from).to_vec(),
            symptoms: DEFAULT_SYMPTOMS.map(String::from).to_vec(),
            n_groups: 3,
            group_weights: None,
            planted_organs: default_planted(),
            group_base_dose: 20.0,
            group_separation: 16.0,
            group_spread: 2.0,
            background_dose_range: [5.0, 45.0],
            background_spread: 6.0,
            voxels_per_organ: 200,
            voxel_heterogeneity: 0.25,
            outcome: OutcomeLinkConfig::default(),
            confounders: vec![
                ConfounderConfig {
                    name: "chemotherapy".into(),
                    prevalence: 0.7,
                    effect: 0.0,
                },
                ConfounderConfig {
                    name: "smoker".into(),
                    prevalence: 0.3,
                    effect: 0.0,
                },
                ConfounderConfig {
                    name: "hpv_positive".into(),
                    prevalence: 0.6,
                    effect: 0.0,
                },
            ],
            rating_missing_rate: 0.0,
        }
    }
}

/// A generated cohort plus the ground truth used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// Planted group per patient; group `g` has the `g`-th lowest planted dose.
    pub planted_labels: Vec<usize>,
    /// Probability of a severe outcome per patient under the link function.
    pub severe_probability: Vec<f64>,
    /// Indices (into the organ list) and weights of the linked organs.
    pub link_weights: Vec<(usize, f64)>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn validate(config: &SyntheticConfig) -> Result<()> {
    if config.n_groups < 2 {
        return Err(Error::invalid("n_groups", "need at least 2 planted groups"));
    }
    if config.n_patients < config.n_groups {
        return Err(Error::invalid(
            "n_patients",
            "need at least one patient per planted group",
        ));
    }
    if config.organs.is_empty() {
        return Err(Error::invalid("organs", "organ list is empty"));
    }
    if config.voxels_per_organ == 0 {
        return Err(Error::invalid("voxels_per_organ", "must be positive"));
    }
    if let Some(w) = &config.group_weights {
        if w.len() != config.n_groups || w.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid(
                "group_weights",
                "need one positive weight per group",
            ));
        }
    }
    for (name, v) in [
        ("group_spread", config.group_spread),
        ("background_spread", config.background_spread),
        ("voxel_heterogeneity", config.voxel_heterogeneity),
        ("group_separation", config.group_separation),
    ] {
        if !(v >= 0.0) {
            return Err(Error::invalid(name, "must be non-negative"));
        }
    }
    let [lo, hi] = config.background_dose_range;
    if !(0.0 <= lo && lo <= hi) {
        return Err(Error::invalid("background_dose_range", "need 0 <= low <= high"));
    }
    if !(0.0..1.0).contains(&config.rating_missing_rate) {
        return Err(Error::invalid("rating_missing_rate", "must lie in [0, 1)"));
    }
    if config.outcome.threshold >= MAX_RATING {
        return Err(Error::invalid("outcome.threshold", "must lie in [0, 9]"));
    }
    for c in &config.confounders {
        if !(0.0..=1.0).contains(&c.prevalence) {
            return Err(Error::invalid(
                format!("confounders.{}.prevalence", c.name),
                "must lie in [0, 1]",
            ));
        }
    }
    Ok(())
}

fn organ_position(config: &SyntheticConfig, name: &str) -> Result<usize> {
    config
        .organs
        .iter()
        .position(|o| o.name() == name)
        .ok_or_else(|| Error::unknown("organ", name))
}

/// Trajectory scale per time point: low at baseline, rising through treatment,
/// partially recovering afterwards.
fn trajectory(time_points: &[String]) -> Vec<f64> {
    time_points
        .iter()
        .map(|t| match t.as_str() {
            "baseline" => 0.15,
            "6wk_post" => 0.8,
            "6mo_post" => 0.5,
            other => other
                .strip_prefix("wk")
                .and_then(|w| w.parse::<f64>().ok())
                .map(|w| 0.2 + 0.8 * (w / 7.0).min(1.0))
                .unwrap_or(0.5),
        })
        .collect()
}

fn clamp_rating(x: f64) -> u8 {
    x.round().clamp(0.0, MAX_RATING as f64) as u8
}

/// Draws a cohort. Deterministic for a fixed `(config, seed)`.
pub fn generate_synthetic_cohort(config: &SyntheticConfig, seed: u64) -> Result<SyntheticCohort> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_patients;
    let n_organs = config.organs.len();

    let planted: Vec<usize> = config
        .planted_organs
        .iter()
        .map(|name| organ_position(config, name))
        .collect::<Result<_>>()?;
    let link_weights: Vec<(usize, f64)> = config
        .outcome
        .weights
        .iter()
        .map(|w| Ok((organ_position(config, &w.organ)?, w.weight)))
        .collect::<Result<_>>()?;
    let outcome_symptom = config
        .symptoms
        .iter()
        .position(|s| *s == config.outcome.symptom)
        .ok_or_else(|| Error::unknown("symptom", config.outcome.symptom.clone()))?;
    let outcome_time = config
        .time_points
        .iter()
        .position(|t| *t == config.outcome.time_point)
        .ok_or_else(|| Error::unknown("time point", config.outcome.time_point.clone()))?;

    // Group labels.
    let weights = config
        .group_weights
        .clone()
        .unwrap_or_else(|| vec![1.0; config.n_groups]);
    let total: f64 = weights.iter().sum();
    let labels: Vec<usize> = (0..n)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            for (g, w) in weights.iter().enumerate() {
                if u < *w {
                    return g;
                }
                u -= w;
            }
            config.n_groups - 1
        })
        .collect();

    // Organ-level background doses.
    let [lo, hi] = config.background_dose_range;
    let background: Vec<f64> = (0..n_organs)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    let is_planted: Vec<bool> = (0..n_organs).map(|o| planted.contains(&o)).collect();

    // Dose features.
    let mut dvh: Vec<Vec<Option<OrganDvh>>> = Vec::with_capacity(n);
    let mut samples = vec![0.0; config.voxels_per_organ];
    let h = config.voxel_heterogeneity;
    for &g in &labels {
        let mut organs = Vec::with_capacity(n_organs);
        for o in 0..n_organs {
            let (center, spread) = if is_planted[o] {
                (
                    config.group_base_dose + g as f64 * config.group_separation,
                    config.group_spread,
                )
            } else {
                (background[o], config.background_spread)
            };
            let z: f64 = rng.sample(StandardNormal);
            let level = (center + spread * z).max(0.5);
            for s in samples.iter_mut() {
                let zv: f64 = rng.sample(StandardNormal);
                *s = level * (h * zv - 0.5 * h * h).exp();
            }
            organs.push(Some(OrganDvh::from_dose_samples(&samples)?));
        }
        dvh.push(organs);
    }

    // Confounders.
    let confounders: Vec<Vec<u8>> = (0..n)
        .map(|_| {
            config
                .confounders
                .iter()
                .map(|c| u8::from(rng.random::<f64>() < c.prevalence))
                .collect()
        })
        .collect();

    // Outcome probabilities from standardized mean doses of the linked organs.
    let mut logits = vec![config.outcome.intercept; n];
    for &(o, w) in &link_weights {
        let means: Vec<f64> = dvh
            .iter()
            .map(|p| p[o].as_ref().map_or(0.0, |d| d.mean()))
            .collect();
        let mu = means.iter().sum::<f64>() / n as f64;
        let sd = (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for (l, m) in logits.iter_mut().zip(&means) {
            *l += w * (m - mu) / sd;
        }
    }
    for (ci, c) in config.confounders.iter().enumerate() {
        for (l, conf) in logits.iter_mut().zip(&confounders) {
            *l += c.effect * conf[ci] as f64;
        }
    }
    let probability: Vec<f64> = logits.iter().map(|&l| logistic(l)).collect();

    // Ratings.
    let shape = trajectory(&config.time_points);
    let noise = Normal::new(0.0, 1.2).expect("valid normal");
    let threshold = config.outcome.threshold;
    let mut patients = Vec::with_capacity(n);
    for i in 0..n {
        let severe = rng.random::<f64>() < probability[i];
        let mut symptoms = Vec::with_capacity(config.symptoms.len());
        for (si, name) in config.symptoms.iter().enumerate() {
            let intensity = if si == outcome_symptom {
                2.0 + 6.0 * probability[i]
            } else {
                5.0 * rng.random::<f64>()
            };
            let mut ratings = Vec::with_capacity(config.time_points.len());
            for (ti, scale) in shape.iter().enumerate() {
                let r = if si == outcome_symptom && ti == outcome_time {
                    if severe {
                        rng.random_range(threshold + 1..=MAX_RATING)
                    } else {
                        rng.random_range(0..=threshold)
                    }
                } else {
                    clamp_rating(scale * intensity + noise.sample(&mut rng))
                };
                let missing = config.rating_missing_rate > 0.0
                    && rng.random::<f64>() < config.rating_missing_rate;
                ratings.push(if missing { None } else { Some(r) });
            }
            symptoms.push(SymptomSeries {
                symptom: name.clone(),
                ratings,
            });
        }
        patients.push(Patient {
            id: format!("SYN{:04}", i + 1),
            dvh: std::mem::take(&mut dvh[i]),
            symptoms,
            confounders: confounders[i].clone(),
        });
    }

    let cohort = Cohort::new(
        config.organs.clone(),
        config.time_points.clone(),
        config.symptoms.clone(),
        config.confounders.iter().map(|c| c.name.clone()).collect(),
        patients,
        false,
    )?;
    Ok(SyntheticCohort {
        cohort,
        planted_labels: labels,
        severe_probability: probability,
        link_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{CohortFormat, FeatureKey, LoadOptions};

    fn small_config() -> SyntheticConfig {
        SyntheticConfig {
            n_patients: 40,
            voxels_per_organ: 50,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn default_config_matches_paper_cohort() {
        let s = generate_synthetic_cohort(&SyntheticConfig::default(), 7).unwrap();
        assert_eq!(s.cohort.len(), 349);
        assert_eq!(s.cohort.organs().len(), 45);
        assert_eq!(s.planted_labels.len(), 349);
        assert!(s.planted_labels.iter().all(|&g| g < 3));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small_config();
        let a = generate_synthetic_cohort(&cfg, 11).unwrap();
        let b = generate_synthetic_cohort(&cfg, 11).unwrap();
        assert_eq!(a.cohort.to_csv_string().unwrap(), b.cohort.to_csv_string().unwrap());
        assert_eq!(a.cohort.to_json_string().unwrap(), b.cohort.to_json_string().unwrap());
        let c = generate_synthetic_cohort(&cfg, 12).unwrap();
        assert_ne!(a.cohort, c.cohort);
    }

    #[test]
    fn config_errors() {
        let mut cfg = small_config();
        cfg.n_groups = 1;
        assert!(generate_synthetic_cohort(&cfg, 0).is_err());
        let mut cfg = small_config();
        cfg.n_patients = 2;
        assert!(generate_synthetic_cohort(&cfg, 0).is_err());
        let mut cfg = small_config();
        cfg.organs.clear();
        assert!(generate_synthetic_cohort(&cfg, 0).is_err());
    }

    #[test]
    fn dvh_monotone_over_many_draws() {
        // 1000 generator draws of (patient, organ) DVHs across a few seeds.
        let cfg = SyntheticConfig {
            n_patients: 25,
            organs: layout::default_organs()[..40].to_vec(),
            planted_organs: vec!["Parotid_Ipsi".into()],
            outcome: OutcomeLinkConfig {
                weights: vec![OrganWeight {
                    organ: "Parotid_Ipsi".into(),
                    weight: 1.0,
                }],
                ..OutcomeLinkConfig::default()
            },
            voxels_per_organ: 30,
            ..SyntheticConfig::default()
        };
        let mut checked = 0;
        let s = generate_synthetic_cohort(&cfg, 0).unwrap();
        for p in s.cohort.patients() {
            for d in p.dvh.iter().flatten() {
                let vx = d.vx_values();
                assert!(vx.windows(2).all(|w| w[0] >= w[1]));
                assert!(d.get(FeatureKey::V(95)) >= 0.0);
                checked += 1;
            }
        }
        assert_eq!(checked, 1000);
    }

    #[test]
    fn file_round_trip_both_formats() {
        let mut cfg = small_config();
        cfg.rating_missing_rate = 0.1;
        let s = generate_synthetic_cohort(&cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("c.csv", CohortFormat::Csv), ("c.json", CohortFormat::Json)] {
            let path = dir.path().join(name);
            crate::cohort::save_cohort(&s.cohort, &path, format).unwrap();
            let back = crate::cohort::load_cohort(&path, format, &LoadOptions::default()).unwrap();
            assert_eq!(back, s.cohort, "{name}");
        }
    }

    #[test]
    fn severe_rate_tracks_link() {
        let s = generate_synthetic_cohort(&SyntheticConfig::default(), 5).unwrap();
        let c = &s.cohort;
        let sym = c.symptom_index("drymouth").unwrap();
        let t = c.time_point_index("6mo_post").unwrap();
        let rate = |g: usize| {
            let members: Vec<&Patient> = c
                .patients()
                .iter()
                .zip(&s.planted_labels)
                .filter(|(_, &l)| l == g)
                .map(|(p, _)| p)
                .collect();
            members.iter().filter(|p| p.rating(sym, t).unwrap() > 4).count() as f64
                / members.len() as f64
        };
        assert!(rate(2) > rate(0) + 0.4, "{} vs {}", rate(2), rate(0));
    }
}
