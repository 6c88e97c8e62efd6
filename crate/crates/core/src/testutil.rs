//! Small hand-built fixtures shared by unit tests.

use crate::clustering::{ClusterModel, ClusterParams, Fitted};
use crate::cohort::{Cohort, OrganDvh, OrganId, Patient, SymptomSeries};

/// One organ (Tongue at 30 Gy), one symptom (drymouth) rated at `time_points`.
pub fn rating_cohort(
    time_points: &[&str],
    ratings: &[Vec<Option<u8>>],
    confounders: &[&str],
    confounder_values: &[Vec<u8>],
) -> Cohort {
    let patients = ratings
        .iter()
        .enumerate()
        .map(|(i, r)| Patient {
            id: format!("p{i:03}"),
            dvh: vec![Some(OrganDvh::from_dose_samples(&[25.0, 30.0, 35.0]).unwrap())],
            symptoms: vec![SymptomSeries {
                symptom: "drymouth".into(),
                ratings: r.clone(),
            }],
            confounders: confounder_values.get(i).cloned().unwrap_or_default(),
        })
        .collect();
    Cohort::new(
        vec![OrganId::named("Tongue")],
        time_points.iter().map(|s| s.to_string()).collect(),
        vec!["drymouth".into()],
        confounders.iter().map(|s| s.to_string()).collect(),
        patients,
        false,
    )
    .unwrap()
}

/// A model whose rank-canonical labels are `ranks` (identity rank order).
pub fn model_from_ranks(ranks: &[usize], k: usize) -> ClusterModel {
    let mut sizes = vec![0; k];
    for &r in ranks {
        sizes[r] += 1;
    }
    ClusterModel {
        params: ClusterParams {
            k,
            ..ClusterParams::default()
        },
        assignments: ranks.to_vec(),
        rank_order: (0..k).collect(),
        sizes,
        row_ids: (0..ranks.len()).collect(),
        log_likelihood: None,
        fitted: Fitted::Kmeans {
            centroids: vec![],
            inertia: 0.0,
        },
    }
}
