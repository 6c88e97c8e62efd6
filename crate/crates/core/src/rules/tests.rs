use super::*;
use crate::cohort::{OrganDvh, OrganId, Patient};
use dosestrat_oracles::{exhaustive_rule_search, mutual_information_bits, OracleFeature};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits(v: &[u8]) -> Vec<bool> {
    v.iter().map(|&x| x == 1).collect()
}

/// Random columns: `features` columns spread over up to `features` organs.
fn random_columns(rng: &mut ChaCha8Rng, n: usize, features: usize, levels: u32) -> (Vec<FeatureColumn>, Vec<usize>) {
    let keys: Vec<FeatureKey> = FeatureKey::all().collect();
    let groups: Vec<usize> = (0..features).map(|_| rng.random_range(0..features)).collect();
    let columns = groups
        .iter()
        .enumerate()
        .map(|(f, &g)| FeatureColumn {
            organ: format!("organ{g}"),
            feature: keys[f],
            values: (0..n).map(|_| Some(f64::from(rng.random_range(0..levels)))).collect(),
        })
        .collect();
    (columns, groups)
}

fn random_target(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    loop {
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        if y.contains(&0) && y.contains(&1) {
            return y;
        }
    }
}

#[test]
fn mutual_information_examples() {
    assert_eq!(mutual_information(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert_eq!(mutual_information(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap(), 0.0);
    let mi = mutual_information(&[1, 0, 0, 0], &[1, 1, 0, 0]).unwrap();
    assert!((mi - 0.3113).abs() < 1e-4);
    assert!(mutual_information(&[1, 0], &[1, 0, 1]).is_err());
}

proptest! {
    #[test]
    fn mutual_information_is_symmetric_and_matches_oracle(
        pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60)
    ) {
        let (s, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let a = mutual_information(&s, &y).unwrap();
        let b = mutual_information(&y, &s).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((a - mutual_information_bits(&bits(&s), &bits(&y))).abs() < 1e-12);
        prop_assert!(a >= -1e-12);
    }
}

#[test]
fn constant_feature_is_pruned_and_separating_feature_reaches_entropy() {
    let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 12)).collect();
    let columns = vec![
        FeatureColumn {
            organ: "Flat".into(),
            feature: FeatureKey::Mean,
            values: vec![Some(30.0); 20],
        },
        FeatureColumn {
            organ: "Sharp".into(),
            feature: FeatureKey::Mean,
            values: (0..20).map(|i| Some(f64::from(i))).collect(),
        },
    ];
    let config = MinerConfig {
        min_support: 1,
        ..MinerConfig::default()
    };
    let pool = score_splits(&columns, &y, &config).unwrap();
    assert!(pool.iter().all(|s| s.organ == "Sharp"));
    let h = dosestrat_oracles::binary_entropy(8, 20);
    assert!((pool[0].info_gain - h).abs() < 1e-12);
    assert!(pool[0].threshold > 11.0 && pool[0].threshold <= 12.0);
    assert!(matches!(score_splits(&columns, &[1; 20], &config), Err(Error::SingleClass(20))));
}

#[test]
fn split_scores_match_brute_force_on_20_patients() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (columns, _) = random_columns(&mut rng, 20, 3, 12);
    let y = random_target(&mut rng, 20);
    let config = MinerConfig {
        min_support: 1,
        min_rule_value: 0.0,
        direction: DirectionMode::BothTry,
        ..MinerConfig::default()
    };
    let pool = score_splits(&columns, &y, &config).unwrap();
    let mut checked = 0;
    for col in &columns {
        let values: Vec<f64> = col.values.iter().map(|v| v.unwrap()).collect();
        for t in candidate_thresholds(&col.values, &config) {
            for op in [Direction::Geq, Direction::Lt] {
                let mask: Vec<bool> = values
                    .iter()
                    .map(|&v| if op == Direction::Geq { v >= t } else { v < t })
                    .collect();
                let support = mask.iter().filter(|&&m| m).count();
                let found = pool
                    .iter()
                    .find(|s| s.organ == col.organ && s.feature == col.feature && s.threshold == t && s.op == op);
                match found {
                    Some(s) => {
                        assert_eq!(s.support, support);
                        assert!((s.info_gain - mutual_information_bits(&mask, &bits(&y))).abs() < 1e-9);
                        checked += 1;
                    }
                    None => assert_eq!(support, 0),
                }
            }
        }
    }
    assert!(checked > 40);
}

#[test]
fn quantile_grid_uses_interior_cut_points() {
    let values: Vec<Option<f64>> = (0..=10).map(|i| Some(f64::from(i))).collect();
    let config = MinerConfig {
        thresholds_per_feature: 4,
        ..MinerConfig::default()
    };
    assert_eq!(candidate_thresholds(&values, &config), vec![2.0, 4.0, 6.0, 8.0]);
    let mid = MinerConfig {
        threshold_grid: ThresholdGrid::Midpoints,
        ..MinerConfig::default()
    };
    let v = [Some(1.0), Some(3.0), Some(3.0), None, Some(4.0)];
    assert_eq!(candidate_thresholds(&v, &mid), vec![2.0, 3.5]);
}

#[test]
fn full_width_beam_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for instance in 0..50 {
        let n = rng.random_range(8..=20);
        let features = rng.random_range(1..=4);
        let (columns, groups) = random_columns(&mut rng, n, features, 8);
        let y = random_target(&mut rng, n);
        let mut config = MinerConfig {
            thresholds_per_feature: rng.random_range(1..=5),
            min_support: rng.random_range(1..=4),
            min_rule_value: if rng.random_bool(0.5) { 0.0 } else { 0.01 },
            max_rules: 4,
            ..MinerConfig::default()
        };
        let pool = score_splits(&columns, &y, &config).unwrap();
        config.k_beam = pool.len().max(1);
        let mined = mine_columns(&columns, &y, &config).unwrap();
        let best = mined.rulesets.first().map_or(0.0, |r| r.metrics.info_gain);
        let oracle: Vec<OracleFeature> = columns
            .iter()
            .zip(&groups)
            .map(|(c, &g)| OracleFeature {
                group: g,
                values: c.values.iter().map(|v| v.unwrap()).collect(),
                thresholds: candidate_thresholds(&c.values, &config),
            })
            .collect();
        let expected = exhaustive_rule_search(&oracle, &bits(&y), config.min_support, config.min_rule_value, 4);
        assert_eq!(best, expected, "instance {instance}");
    }
}

fn audit(result: &MiningResult, config: &MinerConfig, columns: &[FeatureColumn], y: &[u8]) {
    for set in &result.rulesets {
        for (i, r) in set.rules.iter().enumerate() {
            assert!(set.rules[..i].iter().all(|o| o.organ != r.organ), "organ repeated");
            assert_eq!(r.op, set.rules[0].op, "mixed directions");
            assert!(r.info_gain >= config.min_rule_value);
            assert!(r.support >= config.min_support);
            let col = columns
                .iter()
                .find(|c| c.organ == r.organ && c.feature == r.feature)
                .unwrap();
            let mask: Vec<u8> = col
                .values
                .iter()
                .map(|v| u8::from(v.is_some_and(|v| r.op.satisfied(v, r.threshold))))
                .collect();
            assert_eq!(mask.iter().filter(|&&m| m == 1).count(), r.support);
            assert_eq!(mutual_information(&mask, y).unwrap(), r.info_gain);
        }
        for w in set.rules.windows(2) {
            assert!(w[0].info_gain >= w[1].info_gain);
        }
        assert!(set.metrics.predicted_positives >= config.min_support);
    }
    for w in result.rulesets.windows(2) {
        assert!(w[0].metrics.info_gain >= w[1].metrics.info_gain);
    }
}

#[test]
fn constraint_audit_over_random_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let n = rng.random_range(30..=80);
        let features = rng.random_range(2..=8);
        let (mut columns, _) = random_columns(&mut rng, n, features, 20);
        for c in &mut columns {
            for v in &mut c.values {
                if rng.random_bool(0.05) {
                    *v = None;
                }
            }
        }
        let y = random_target(&mut rng, n);
        let config = MinerConfig {
            k_beam: rng.random_range(1..=6),
            min_support: rng.random_range(1..=10),
            min_rule_value: rng.random_range(0.0..0.05),
            thresholds_per_feature: rng.random_range(2..=10),
            direction: [DirectionMode::Geq, DirectionMode::Lt, DirectionMode::BothTry][rng.random_range(0..3)],
            ..MinerConfig::default()
        };
        let result = mine_columns(&columns, &y, &config).unwrap();
        assert!(result.rulesets.len() <= config.max_rulesets_returned);
        audit(&result, &config, &columns, &y);
    }
}

fn mean_dose_patient(id: &str, doses: &[f64]) -> Patient {
    Patient {
        id: id.into(),
        dvh: doses
            .iter()
            .map(|&d| Some(OrganDvh::from_dose_samples(&[d]).unwrap()))
            .collect(),
        symptoms: vec![],
        confounders: vec![],
    }
}

/// Eight patients, organs A and B carrying one dose each.
fn eight_patient_cohort() -> Cohort {
    let doses = [
        [50.0, 30.0],
        [45.0, 10.0],
        [20.0, 40.0],
        [60.0, 35.0],
        [10.0, 5.0],
        [48.0, 25.0],
        [30.0, 50.0],
        [41.0, 21.0],
    ];
    let patients = doses
        .iter()
        .enumerate()
        .map(|(i, d)| mean_dose_patient(&format!("p{i}"), d))
        .collect();
    Cohort::new(
        vec![OrganId::named("A"), OrganId::named("B")],
        vec![],
        vec![],
        vec![],
        patients,
        false,
    )
    .unwrap()
}

fn rule(organ: &str, threshold: f64) -> Rule {
    Rule {
        organ: organ.into(),
        feature: FeatureKey::Mean,
        op: Direction::Geq,
        threshold,
        info_gain: 0.0,
        support: 0,
    }
}

#[test]
fn eight_patient_trace_matches_manual_filtering() {
    let cohort = eight_patient_cohort();
    let y = [1, 0, 0, 1, 0, 1, 0, 0];
    // A >= 40 removes p2, p4, p6; B >= 22 then removes p1 and p7.
    let eval = evaluate_ruleset(&[rule("A", 40.0), rule("B", 22.0)], &cohort, &y).unwrap();
    let stages: Vec<Stage> = eval.trace.iter().map(|t| t.stage).collect();
    use Stage::{Failed, Pass};
    assert_eq!(stages, vec![Pass, Failed(1), Failed(0), Pass, Failed(0), Pass, Failed(0), Failed(1)]);
    assert_eq!(eval.remaining, vec![8, 5, 3]);
    let counts: Vec<(usize, usize)> = eval.strata.iter().map(|s| (s.true_class, s.not_true_class)).collect();
    assert_eq!(counts, vec![(0, 3), (0, 2), (3, 0)]);
    let m = eval.metrics;
    assert_eq!((m.predicted_positives, m.true_positives, m.positives), (3, 3, 3));
    assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    assert!((m.info_gain - dosestrat_oracles::binary_entropy(3, 8)).abs() < 1e-12);
    let json = serde_json::to_value(&eval.trace[1]).unwrap();
    assert_eq!(json["stage"], 1);
    assert_eq!(serde_json::to_value(&eval.trace[0]).unwrap()["stage"], "pass");
    assert!(evaluate_ruleset(&[rule("C", 1.0)], &cohort, &y).is_err());
}

#[test]
fn empty_ruleset_passes_everyone() {
    let cohort = eight_patient_cohort();
    let y = [1, 0, 0, 1, 0, 1, 0, 0];
    let eval = evaluate_ruleset(&[], &cohort, &y).unwrap();
    assert!(eval.trace.iter().all(|t| t.stage == Stage::Pass));
    assert_eq!(eval.metrics.precision, 3.0 / 8.0);
    assert_eq!(eval.metrics.info_gain, 0.0);
}

#[test]
fn mined_metrics_agree_with_evaluation_and_filtering_is_monotone() {
    let cohort = eight_patient_cohort();
    let y = [1, 0, 0, 1, 0, 1, 0, 0];
    let config = MinerConfig {
        min_support: 2,
        thresholds_per_feature: 5,
        ..MinerConfig::default()
    };
    let result = mine_rules(&cohort, &y, &RuleScope::AllFeatures, &config).unwrap();
    assert!(!result.rulesets.is_empty());
    for set in &result.rulesets {
        let eval = evaluate_ruleset(&set.rules, &cohort, &y).unwrap();
        let (a, b) = (set.metrics, eval.metrics);
        assert_eq!((a.predicted_positives, a.true_positives), (b.predicted_positives, b.true_positives));
        for (x, y) in [(a.info_gain, b.info_gain), (a.precision, b.precision), (a.recall, b.recall), (a.f1, b.f1)] {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!(eval.remaining.windows(2).all(|w| w[0] >= w[1]));
        let json = serde_json::to_value(set).unwrap();
        assert_eq!(json["rules"][0]["op"], ">=");
        for key in ["predicted_positives", "info_gain", "precision", "recall", "f1"] {
            assert!(json["metrics"][key].is_number(), "{key}");
        }
    }
}

#[test]
fn constant_target_yields_empty_list_with_diagnostic() {
    let cohort = eight_patient_cohort();
    let result = mine_rules(&cohort, &[0; 8], &RuleScope::AllFeatures, &MinerConfig::default()).unwrap();
    assert!(result.rulesets.is_empty());
    assert!(result.diagnostic.unwrap().contains("constant"));
    let none = mine_rules(&cohort, &[1, 0, 0, 1, 0, 1, 0, 0], &RuleScope::AllFeatures, &MinerConfig::default())
        .unwrap();
    assert!(none.rulesets.is_empty() && none.diagnostic.is_some());
    assert!(mine_rules(&cohort, &[1, 0], &RuleScope::AllFeatures, &MinerConfig::default()).is_err());
}

#[test]
fn masked_patients_are_ignored() {
    let cohort = eight_patient_cohort();
    let y = [Some(1), None, Some(0), Some(1), Some(0), Some(1), None, Some(0)];
    let eval = evaluate_ruleset_masked(&[rule("A", 40.0)], &cohort, &y).unwrap();
    assert_eq!(eval.trace.len(), 6);
    assert_eq!(eval.metrics.n, 6);
    assert!(eval.trace.iter().all(|t| t.patient != "p1" && t.patient != "p6"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn filtering_never_grows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cohort = eight_patient_cohort();
        let y = random_target(&mut rng, 8);
        let rules: Vec<Rule> = (0..rng.random_range(0..4))
            .map(|_| Rule {
                op: if rng.random_bool(0.5) { Direction::Geq } else { Direction::Lt },
                ..rule(if rng.random_bool(0.5) { "A" } else { "B" }, rng.random_range(0.0..60.0))
            })
            .collect();
        let eval = evaluate_ruleset(&rules, &cohort, &y).unwrap();
        prop_assert!(eval.remaining.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(eval.remaining[rules.len()], eval.metrics.predicted_positives);
    }
}

#[test]
fn planted_group_is_explained_by_planted_organs() {
    use crate::cohort::{generate_synthetic_cohort, SyntheticConfig};
    let synth = generate_synthetic_cohort(&SyntheticConfig::default(), 7).unwrap();
    let top = *synth.planted_labels.iter().max().unwrap();
    let y: Vec<u8> = synth.planted_labels.iter().map(|&g| u8::from(g == top)).collect();
    let result = mine_rules(&synth.cohort, &y, &RuleScope::AllFeatures, &MinerConfig::default()).unwrap();
    let best = &result.rulesets[0];
    let planted = SyntheticConfig::default().planted_organs;
    assert!(planted.contains(&best.rules[0].organ), "{planted:?}");
    assert!(best.metrics.f1 > 0.9);
}
