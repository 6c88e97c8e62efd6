use super::*;
use crate::cohort::{generate_synthetic_cohort, SyntheticConfig};

fn workbench(n: usize) -> Workbench {
    let config = SyntheticConfig {
        n_patients: n,
        ..SyntheticConfig::default()
    };
    let cohort = Arc::new(generate_synthetic_cohort(&config, 3).unwrap().cohort);
    let mut analysis = Analysis::default_for(&cohort);
    analysis.spec.organs = ["Parotid_Ipsi", "Parotid_Contra", "Tongue"].map(String::from).to_vec();
    analysis.outcome.confounders = vec!["smoker".into()];
    Workbench::new(cohort, analysis).unwrap()
}

#[test]
fn defaults_follow_the_clinical_setup() {
    let o = OutcomeSelection::default();
    assert_eq!((o.symptom.as_str(), o.time_point.as_str(), o.threshold), ("drymouth", "6mo_post", 4));
    assert_eq!(ClusterParams::default().k, 3);
    let keys: Vec<String> = FeatureKey::all().map(|k| k.to_string()).collect();
    assert_eq!(keys.len(), 21);
    assert_eq!(keys[0], "V5");
    assert_eq!(keys[18], "V95");
    assert_eq!(&keys[19..], ["mean", "max"]);
    assert!(VX_LEVELS.windows(2).all(|w| w[1] - w[0] == 5));
}

#[test]
fn renders_are_cached_and_revisions_reset_caches() {
    let wb = workbench(90);
    let a = wb.render(&View::Clusters).unwrap();
    let b = wb.render(&View::Clusters).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    let view: serde_json::Value = serde_json::from_str(&a.text).unwrap();
    assert_eq!(view["sizes"].as_array().unwrap().len(), 3);
    assert_eq!(view["dose_quantiles"].as_array().unwrap().len(), 45);
    assert_eq!(view["dvh_curves"][0]["clusters"][0].as_array().unwrap().len(), 19);
    let q = &view["dose_quantiles"][0]["clusters"][0];
    assert!(q[0].as_f64().unwrap() <= q[1].as_f64().unwrap() && q[1].as_f64().unwrap() <= q[2].as_f64().unwrap());

    let mut next = wb.analysis().clone();
    next.params.seed = 9;
    let wb2 = wb.revise(next).unwrap();
    assert_eq!(wb2.revision(), 1);
    let c = wb2.render(&View::Clusters).unwrap();
    assert!(!Arc::ptr_eq(&a, &c));
    let mut bad = wb.analysis().clone();
    bad.spec.organs.push("Nowhere".into());
    assert!(wb.revise(bad).is_err());
}

#[test]
fn independent_workbenches_render_identical_bytes() {
    let a = workbench(90);
    let b = workbench(90).with_execution(Execution::Serial);
    for view in [
        View::Model,
        View::Lrt {
            thresholds: Some(vec![3, 4, 5]),
            format: Format::Csv,
        },
        View::Rules(RulesRequest::default()),
    ] {
        assert_eq!(a.render(&view).unwrap().text, b.render(&view).unwrap().text, "{view:?}");
    }
}

#[test]
fn lrt_sweep_csv_has_a_row_per_cluster_and_threshold() {
    let wb = workbench(90);
    let sweep = wb.lrt(Some(&[3, 4])).unwrap();
    let csv = sweep.to_csv_string();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("threshold,rank,"));
    assert_eq!(lines.len(), 1 + 2 * 3);
    let cols = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == cols));
    assert!(wb.lrt(Some(&[11])).is_err());
    let failed = wb.lrt(Some(&[10])).unwrap();
    assert!(failed.results[0].error.is_some());
    assert_eq!(failed.to_csv_string().lines().nth(1).unwrap().split(',').count(), cols);
}

#[test]
fn axes_parse_and_scatter_projects_patients() {
    for s in ["dose_pc1", "symptom_pc2", "dose:Tongue:V40", "rating:drymouth:6mo_post", "confounder:smoker"] {
        assert_eq!(s.parse::<Axis>().unwrap().to_string(), s);
    }
    for s in ["dose_pc0", "pc1", "dose:Tongue", "rating:x"] {
        assert!(s.parse::<Axis>().is_err(), "{s}");
    }
    let wb = workbench(90);
    let view = wb.scatter(&"dose_pc1".parse().unwrap(), &"symptom_pc1".parse().unwrap()).unwrap();
    assert_eq!(view.points.len(), 90);
    assert!(view.x.explained.unwrap() > 0.0);
    assert!(view.points.iter().all(|p| p.cluster.is_some() && p.ratings.len() == 10));
    let raw = wb
        .scatter(&"dose:Tongue:mean".parse().unwrap(), &"rating:drymouth:6mo_post".parse().unwrap())
        .unwrap();
    let p0 = &wb.cohort().patients()[0];
    assert_eq!(raw.points[0].x, p0.dose(wb.cohort().organ_index("Tongue").unwrap(), FeatureKey::Mean).unwrap());
    assert!(wb.scatter(&Axis::DosePc(13), &Axis::DosePc(1)).is_err());
}

#[test]
fn rule_targets_parse_and_constant_targets_are_diagnosed() {
    assert_eq!("cluster:2".parse::<RuleTarget>().unwrap(), RuleTarget::Cluster(Some(2)));
    assert_eq!("cluster".parse::<RuleTarget>().unwrap(), RuleTarget::Cluster(None));
    assert!("clusters".parse::<RuleTarget>().is_err());
    let wb = workbench(90);
    let c = wb.cohort();
    let mut patients = c.patients().to_vec();
    for p in &mut patients {
        for s in &mut p.symptoms {
            s.ratings.iter_mut().for_each(|r| *r = Some(1));
        }
    }
    let calm = Cohort::new(
        c.organs().to_vec(),
        c.time_points().to_vec(),
        c.symptoms().to_vec(),
        c.confounders().to_vec(),
        patients,
        false,
    )
    .unwrap();
    let flat = Workbench::new(Arc::new(calm), wb.analysis().clone()).unwrap();
    let view = flat.rules(&RulesRequest::default()).unwrap();
    assert!(view.rulesets.is_empty());
    assert!(view.diagnostic.unwrap().contains("constant"));
    let cluster = wb
        .rules(&RulesRequest {
            target: RuleTarget::Cluster(Some(2)),
            ..RulesRequest::default()
        })
        .unwrap();
    let best = &cluster.rulesets[0];
    assert_eq!(best.trace.len(), 90);
    assert_eq!(best.remaining.last().copied(), Some(best.metrics.predicted_positives));
    assert!(wb
        .rules(&RulesRequest {
            target: RuleTarget::Cluster(Some(3)),
            ..RulesRequest::default()
        })
        .is_err());
}

#[test]
fn unknown_patient_is_reported() {
    let wb = workbench(40);
    assert!(matches!(wb.patient("nobody"), Err(Error::Unknown { what: "patient", .. })));
    let id = wb.cohort().patients()[3].id.clone();
    assert_eq!(wb.patient(&id).unwrap().id, id);
}

#[test]
fn analysis_json_rejects_unknown_fields() {
    let wb = workbench(40);
    let text = serde_json::to_string(wb.analysis()).unwrap();
    let back: Analysis = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, wb.analysis());
    assert!(serde_json::from_str::<OutcomeSelection>(r#"{"symptom":"drymouth","bogus":1}"#).is_err());
}
