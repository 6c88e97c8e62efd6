use super::*;
use crate::cohort::{
    generate_synthetic_cohort, OrganDvh, OrganId, Patient, SymptomSeries, SyntheticConfig,
};
use crate::features::Window;
use dosestrat_oracles::adjusted_rand_index;
use rand::Rng;
use rand_distr::StandardNormal;

const METHODS: [ClusterMethod; 3] = [
    ClusterMethod::Kmeans,
    ClusterMethod::WardHierarchical,
    ClusterMethod::BayesianGmm,
];

/// Three isotropic blobs with centroids 10 standard deviations apart.
fn blobs(seed: u64, per: usize, d: usize) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = derived_rng(seed, 77);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for g in 0..3 {
        for _ in 0..per {
            let row = (0..d)
                .map(|j| {
                    let center = if j == g % d { 10.0 } else { 0.0 } + if g == 2 { 10.0 } else { 0.0 };
                    center + rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            rows.push(row);
            labels.push(g);
        }
    }
    (FeatureMatrix::from_rows(&rows).unwrap(), labels)
}

fn params(method: ClusterMethod, seed: u64) -> ClusterParams {
    ClusterParams {
        method,
        seed,
        ..ClusterParams::default()
    }
}

#[test]
fn separated_blobs_are_recovered_by_every_method() {
    for seed in 0..20 {
        let (m, labels) = blobs(seed, 30, 4);
        for method in METHODS {
            let model = cluster_cohort(&m, &params(method, seed)).unwrap();
            let ari = adjusted_rand_index(&model.assignments, &labels);
            assert!(ari >= 0.99, "{method:?} seed {seed}: ARI {ari}");
        }
    }
}

#[test]
fn duplicated_rows_share_a_cluster() {
    let (m, _) = blobs(5, 20, 3);
    let rows: Vec<Vec<f64>> = m.rows().flat_map(|r| [r.to_vec(), r.to_vec()]).collect();
    let dup = FeatureMatrix::from_rows(&rows).unwrap();
    for method in METHODS {
        let model = cluster_cohort(&dup, &params(method, 1)).unwrap();
        for pair in model.assignments.chunks(2) {
            assert_eq!(pair[0], pair[1], "{method:?}");
        }
    }
}

#[test]
fn fits_are_deterministic() {
    let (m, _) = blobs(9, 25, 5);
    for method in METHODS {
        let a = cluster_cohort(&m, &params(method, 4)).unwrap();
        let b = cluster_cohort(&m, &params(method, 4)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn em_objective_never_decreases() {
    for cov in [CovarianceType::Diagonal, CovarianceType::Full] {
        for seed in 0..10 {
            let (m, _) = blobs(seed, 40, 3);
            // Overlapping blobs make EM take more steps.
            let rows: Vec<Vec<f64>> = m.rows().map(|r| r.iter().map(|v| v * 0.25).collect()).collect();
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let p = ClusterParams {
                covariance_type: cov,
                tol: 1e-10,
                ..params(ClusterMethod::BayesianGmm, seed)
            };
            let model = cluster_cohort(&m, &p).unwrap();
            let Fitted::BayesianGmm { objective_trace, .. } = &model.fitted else {
                unreachable!()
            };
            assert!(objective_trace.len() > 1);
            for w in objective_trace.windows(2) {
                assert!(w[1] - w[0] >= -1e-8, "{cov:?} seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn permuted_rows_give_matching_partitions() {
    for seed in 0..5 {
        let (m, _) = blobs(seed, 30, 4);
        let n = m.n;
        let order: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| m.row(i).to_vec()).collect();
        let pm = FeatureMatrix::from_rows(&rows).unwrap();
        for method in [ClusterMethod::Kmeans, ClusterMethod::BayesianGmm] {
            let a = cluster_cohort(&m, &params(method, seed)).unwrap();
            let b = cluster_cohort(&pm, &params(method, seed)).unwrap();
            let a_perm: Vec<usize> = order.iter().map(|&i| a.assignments[i]).collect();
            assert!(adjusted_rand_index(&a_perm, &b.assignments) >= 0.95);
        }
    }
}

#[test]
fn rejects_bad_inputs() {
    let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
    assert!(matches!(
        cluster_cohort(&m, &ClusterParams::default()),
        Err(Error::TooFewRows { rows: 3, k: 3 })
    ));
    let nan = FeatureMatrix::from_rows(&[vec![0.0], vec![f64::NAN], vec![2.0], vec![3.0], vec![4.0]])
        .unwrap();
    assert!(matches!(cluster_cohort(&nan, &ClusterParams::default()), Err(Error::NonFinite)));
    let k1 = ClusterParams {
        k: 1,
        ..ClusterParams::default()
    };
    assert!(cluster_cohort(&m, &k1).is_err());
}

fn uniform_dvh(level: f64) -> OrganDvh {
    OrganDvh::from_dose_samples(&[level * 0.9, level, level * 1.1]).unwrap()
}

/// Two organs; patients alternate between mean dose 60 Gy and 30 Gy to both.
fn two_level_cohort() -> Cohort {
    let patients = (0..20)
        .map(|i| Patient {
            id: format!("p{i}"),
            dvh: vec![Some(uniform_dvh(if i % 2 == 0 { 60.0 } else { 30.0 })); 2],
            symptoms: vec![SymptomSeries {
                symptom: "drymouth".into(),
                ratings: vec![Some(0)],
            }],
            confounders: vec![],
        })
        .collect();
    Cohort::new(
        vec![OrganId::named("Parotid_Ipsi"), OrganId::named("Parotid_Contra")],
        vec!["6mo_post".into()],
        vec!["drymouth".into()],
        vec![],
        patients,
        false,
    )
    .unwrap()
}

#[test]
fn higher_dose_sum_ranks_higher() {
    let cohort = two_level_cohort();
    let spec = FeatureSpec::new(
        vec!["Parotid_Ipsi".into(), "Parotid_Contra".into()],
        Window::new(5, 95).unwrap(),
    );
    let p = ClusterParams {
        k: 2,
        method: ClusterMethod::Kmeans,
        ..ClusterParams::default()
    };
    let (_, model) = fit_ranked(&cohort, &spec, &p).unwrap();
    let ranking = rank_clusters(&model, &cohort, &spec).unwrap();
    let high = model.assignments[0];
    assert!((ranking.scores[high] - 120.0).abs() < 1e-9);
    assert!((ranking.scores[1 - high] - 60.0).abs() < 1e-9);
    assert_eq!(model.rank_order[high], 1);
    assert_eq!(model.ranked_assignments()[0], 1);
    assert_eq!(model.ranked_assignments()[1], 0);
}

#[test]
fn identical_profiles_rank_by_raw_index() {
    let cohort = two_level_cohort();
    let spec = FeatureSpec::new(vec!["Parotid_Ipsi".into()], Window::new(50, 50).unwrap());
    // Every cluster holds one high and one low patient, so all scores are 45 Gy.
    let assignments: Vec<usize> = (0..20).map(|i| (i / 2) % 3).collect();
    let model = ClusterModel {
        params: ClusterParams::default(),
        sizes: sizes_of(&assignments, 3),
        assignments,
        rank_order: vec![0, 1, 2],
        row_ids: (0..20).collect(),
        log_likelihood: None,
        fitted: Fitted::Kmeans {
            centroids: vec![],
            inertia: 0.0,
        },
    };
    let ranking = rank_clusters(&model, &cohort, &spec).unwrap();
    assert_eq!(ranking.rank_order, vec![0, 1, 2]);
}

/// The cluster at each rank holds mostly the planted group of that dose level.
fn ranks_follow_planted_order(ranked: &[usize], planted: &[usize], k: usize) -> bool {
    (0..k).all(|r| {
        let mut counts = vec![0usize; k];
        for (a, p) in ranked.iter().zip(planted) {
            if *a == r {
                counts[*p] += 1;
            }
        }
        counts.iter().enumerate().max_by_key(|(_, c)| **c).map(|(g, _)| g) == Some(r)
    })
}

#[test]
fn planted_dose_levels_are_ranked_in_order() {
    let config = SyntheticConfig {
        n_patients: 150,
        ..SyntheticConfig::default()
    };
    let spec = FeatureSpec::new(config.planted_organs.clone(), Window::new(30, 60).unwrap());
    let mut hits = 0;
    for seed in 0..20 {
        let syn = generate_synthetic_cohort(&config, seed).unwrap();
        let (_, model) = fit_ranked(&syn.cohort, &spec, &params(ClusterMethod::BayesianGmm, seed)).unwrap();
        if ranks_follow_planted_order(&model.ranked_assignments(), &syn.planted_labels, 3) {
            hits += 1;
        }
    }
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn zero_separation_is_unrecoverable() {
    let config = SyntheticConfig {
        n_patients: 150,
        group_separation: 0.0,
        ..SyntheticConfig::default()
    };
    let spec = FeatureSpec::new(config.planted_organs.clone(), Window::new(30, 60).unwrap());
    for seed in 0..20 {
        let syn = generate_synthetic_cohort(&config, seed).unwrap();
        let (_, model) = fit_ranked(&syn.cohort, &spec, &params(ClusterMethod::BayesianGmm, seed)).unwrap();
        let ari = adjusted_rand_index(&model.assignments, &syn.planted_labels);
        assert!(ari.abs() < 0.15, "seed {seed}: ARI {ari}");
    }
}
