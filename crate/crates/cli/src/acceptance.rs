//! Acceptance criteria as plain functions, shared by `repro-acceptance` and the
//! `acceptance` test target. Every check is deterministic: seeds are fixed.

use std::sync::Arc;
use std::time::Instant;

use dosestrat_core::clustering::{fit_ranked, ClusterMethod, ClusterParams};
use dosestrat_core::cohort::{
    generate_synthetic_cohort, layout, FeatureKey, OrganWeight, SyntheticConfig, VX_LEVELS,
};
use dosestrat_core::features::{FeatureSpec, Window};
use dosestrat_core::pipeline::{Analysis, Format, OutcomeSelection, RuleTarget, RulesRequest, View, Workbench};
use dosestrat_core::rules::{
    candidate_thresholds, mine_columns, mutual_information, score_splits, DirectionMode, FeatureColumn,
    MinerConfig, MiningResult,
};
use dosestrat_core::search::{
    evaluate_forward_search, CandidateEdit, EditKind, Execution, Metric, SearchInput, Status,
};
use dosestrat_core::stats::{
    binarize_outcome, evidence_label, fit_logistic, lrt_on_sample, Evidence, LrtSample, OutcomeSpec,
};
use dosestrat_oracles::{
    adjusted_rand_index, binary_entropy, exhaustive_rule_search, logistic_gradient_ascent,
    logistic_log_likelihood, mutual_information_bits, OracleFeature,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Report {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Report {
    pub fn line(&self) -> String {
        format!(
            "criterion {} {} {:<28} {:>8.2} s  {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    run: fn() -> Tally,
}

pub const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "planted recovery", run: planted_recovery },
    Criterion { id: 2, title: "logistic and LRT", run: logistic_and_lrt },
    Criterion { id: 3, title: "BIC evidence labels", run: evidence_labels },
    Criterion { id: 4, title: "rule miner vs oracle", run: rule_miner_oracle },
    Criterion { id: 5, title: "MI kernel", run: mi_kernel },
    Criterion { id: 6, title: "forward search", run: forward_search },
    Criterion { id: 7, title: "performance budget", run: performance_budget },
    Criterion { id: 8, title: "defaults", run: defaults },
    Criterion { id: 9, title: "CLI/service parity", run: crate::parity::cli_service_parity },
];

pub fn run_one(c: &Criterion) -> Report {
    let start = Instant::now();
    let tally = (c.run)();
    Report {
        id: c.id,
        title: c.title,
        passed: tally.failures.is_empty(),
        detail: tally.detail(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs the listed criteria (all when empty), calling `each` as reports arrive.
pub fn run(ids: &[u8], mut each: impl FnMut(&Report)) -> Vec<Report> {
    CRITERIA
        .iter()
        .filter(|c| ids.is_empty() || ids.contains(&c.id))
        .map(|c| {
            let r = run_one(c);
            each(&r);
            r
        })
        .collect()
}

/// Collected observations and failures of a criterion.
#[derive(Default)]
pub struct Tally {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Tally {
    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn fail(&mut self, s: impl Into<String>) {
        self.failures.push(s.into());
    }

    fn detail(&self) -> String {
        let mut parts = self.notes.clone();
        let shown = self.failures.len().min(3);
        parts.extend(self.failures[..shown].iter().map(|f| format!("FAILED: {f}")));
        if self.failures.len() > shown {
            parts.push(format!("... {} more failures", self.failures.len() - shown));
        }
        parts.join("; ")
    }
}

/// The cluster at each rank holds mostly the planted group of that dose level.
fn ranks_follow_planted(ranked: &[usize], planted: &[usize], k: usize) -> bool {
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

fn planted_recovery() -> Tally {
    let mut t = Tally::default();
    let config = SyntheticConfig::default();
    let ratio = config.group_separation / config.group_spread;
    t.check(ratio >= 8.0, || format!("separation/spread {ratio} < 8"));
    t.check(config.organs.len() == 45 && config.n_patients == 349 && config.n_groups == 3, || {
        "default synthetic cohort is not 349 x 45 with 3 groups".into()
    });
    let spec = FeatureSpec::new(config.planted_organs.clone(), Window::default());
    let (mut hits, mut slowest, mut worst_ari) = (0, 0.0f64, 1.0f64);
    for seed in 0..20 {
        let syn = match generate_synthetic_cohort(&config, seed) {
            Ok(s) => s,
            Err(e) => {
                t.fail(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let params = ClusterParams {
            seed,
            ..ClusterParams::default()
        };
        let start = Instant::now();
        let fitted = fit_ranked(&syn.cohort, &spec, &params);
        slowest = slowest.max(start.elapsed().as_secs_f64());
        match fitted {
            Ok((_, model)) => {
                let ari = adjusted_rand_index(&model.assignments, &syn.planted_labels);
                worst_ari = worst_ari.min(ari);
                if ari >= 0.95 && ranks_follow_planted(&model.ranked_assignments(), &syn.planted_labels, 3) {
                    hits += 1;
                }
            }
            Err(e) => t.fail(format!("seed {seed}: {e}")),
        }
    }
    t.note(format!("{hits}/20 seeds with ARI >= 0.95 and planted rank order"));
    t.note(format!("min ARI {worst_ari:.4}, slowest fit {:.1} ms", slowest * 1e3));
    t.check(hits >= 19, || format!("only {hits}/20 seeds recovered"));
    t.check(slowest < 5.0, || format!("slowest run {slowest:.2} s >= 5 s"));
    t
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

fn random_design(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<u8>) {
    let n = rng.random_range(20..=60);
    let p = rng.random_range(1..=3);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            std::iter::once(1.0)
                .chain((1..p).map(|_| rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect();
    let y = rows
        .iter()
        .map(|x| {
            let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    (rows, y)
}

fn null_sample(seed: u64, n: usize) -> LrtSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = LrtSample {
        ranks: Vec::new(),
        y: Vec::new(),
        confounders: Vec::new(),
        confounder_names: names(3),
        excluded: Vec::new(),
    };
    for _ in 0..n {
        let conf: Vec<f64> = (0..3).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.5))).collect();
        let eta = -0.8 + 0.5 * conf[0] - 0.3 * conf[1];
        s.y.push(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())));
        s.ranks.push(rng.random_range(0..3));
        s.confounders.push(conf);
    }
    s
}

fn logistic_and_lrt() -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);

    // 2x2 tables: exp(beta_1) is the cross-product ratio.
    let mut worst_or = 0.0f64;
    for _ in 0..100 {
        let [a, b, c, d]: [usize; 4] = std::array::from_fn(|_| rng.random_range(3..40));
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (count, x, label) in [(a, 1.0, 1), (b, 1.0, 0), (c, 0.0, 1), (d, 0.0, 0)] {
            for _ in 0..count {
                rows.push(vec![1.0, x]);
                y.push(label);
            }
        }
        match fit_logistic(&rows, &names(2), &y) {
            Ok(fit) => {
                let expected = (a * d) as f64 / (b * c) as f64;
                worst_or = worst_or.max((fit.coefficients[1].exp() - expected).abs() / expected.max(1.0));
            }
            Err(e) => t.fail(format!("2x2 ({a},{b},{c},{d}): {e}")),
        }
    }
    t.note(format!("2x2 odds ratio max rel. error {worst_or:.1e}"));
    t.check(worst_or < 1e-6, || format!("odds ratio error {worst_or:e}"));

    // MLE vs the gradient-ascent reference.
    let (mut checked, mut worst_beta) = (0, 0.0f64);
    while checked < 100 {
        let (rows, y) = random_design(&mut rng);
        let Ok(fit) = fit_logistic(&rows, &names(rows[0].len()), &y) else {
            continue;
        };
        if fit.separation {
            continue;
        }
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let Some(reference) = logistic_gradient_ascent(&rows, &yf) else {
            t.fail("reference optimizer did not converge");
            continue;
        };
        for (a, b) in fit.coefficients.iter().zip(&reference) {
            worst_beta = worst_beta.max((a - b).abs());
        }
        let ll = logistic_log_likelihood(&rows, &yf, &fit.coefficients);
        t.check((ll - fit.log_likelihood).abs() < 1e-8, || "log-likelihood mismatch".into());
        checked += 1;
    }
    t.note(format!("MLE vs reference max |diff| {worst_beta:.1e} on 100 designs"));
    t.check(worst_beta < 1e-5, || format!("coefficient error {worst_beta:e}"));

    // Null calibration, LR statistic sign.
    let (mut rejections, mut min_lr) = (0, f64::INFINITY);
    for seed in 0..200 {
        match lrt_on_sample(&null_sample(seed, 349), 3, &OutcomeSpec::default()) {
            Ok(r) => {
                if r.clusters[2].p_value < 0.05 {
                    rejections += 1;
                }
                min_lr = r.clusters.iter().map(|c| c.lr_statistic).fold(min_lr, f64::min);
            }
            Err(e) => t.fail(format!("null seed {seed}: {e}")),
        }
    }
    for seed in 0..500 {
        if let Ok(r) = lrt_on_sample(&null_sample(1000 + seed, 60), 3, &OutcomeSpec::default()) {
            min_lr = r.clusters.iter().map(|c| c.lr_statistic).fold(min_lr, f64::min);
        }
    }
    let rate = f64::from(rejections) / 200.0;
    t.note(format!("null p<0.05 rate {rate:.3}, min LR {min_lr:.2e}"));
    t.check((0.01..=0.10).contains(&rate), || format!("null rejection rate {rate}"));
    t.check(min_lr >= -1e-8, || format!("negative LR statistic {min_lr}"));

    // Equal-likelihood nested pairs: an empty indicator adds a parameter and nothing else.
    for n in [40usize, 57, 120, 349] {
        let mut s = null_sample(n as u64, n);
        s.ranks.iter_mut().for_each(|r| *r = if *r == 1 { 0 } else { *r });
        match lrt_on_sample(&s, 3, &OutcomeSpec::default()) {
            Ok(r) => t.check(r.clusters[1].delta_bic == (n as f64).ln(), || {
                format!("n = {n}: delta_bic {} != ln n", r.clusters[1].delta_bic)
            }),
            Err(e) => t.fail(format!("n = {n}: {e}")),
        }
    }
    t
}

fn evidence_labels() -> Tally {
    let mut t = Tally::default();
    let cases = [
        (-6.0, Evidence::Strong),
        (-6.000_001, Evidence::Strong),
        (-5.999_999, Evidence::Reasonable),
        (-2.0, Evidence::Reasonable),
        (-1.999_999, Evidence::None),
        (0.0, Evidence::None),
        (4.0, Evidence::None),
    ];
    for (d, want) in cases {
        let got = evidence_label(d);
        t.check(got == want, || format!("delta_bic {d}: {got:?} != {want:?}"));
    }
    t.note(format!("{} boundary cases", cases.len()));
    t
}

/// Random feature columns spread over up to `features` organs.
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

fn bits(v: &[u8]) -> Vec<bool> {
    v.iter().map(|&x| x == 1).collect()
}

fn audit(t: &mut Tally, result: &MiningResult, config: &MinerConfig, columns: &[FeatureColumn], y: &[u8]) {
    for set in &result.rulesets {
        for (i, r) in set.rules.iter().enumerate() {
            t.check(set.rules[..i].iter().all(|o| o.organ != r.organ), || "organ repeated".into());
            t.check(r.op == set.rules[0].op, || "mixed directions".into());
            t.check(r.info_gain >= config.min_rule_value, || "solo MI below floor".into());
            t.check(r.support >= config.min_support, || "solo support below floor".into());
            let Some(col) = columns.iter().find(|c| c.organ == r.organ && c.feature == r.feature) else {
                t.fail("rule names an unknown column");
                continue;
            };
            let mask: Vec<u8> = col
                .values
                .iter()
                .map(|v| u8::from(v.is_some_and(|v| r.op.satisfied(v, r.threshold))))
                .collect();
            t.check(mask.iter().filter(|&&m| m == 1).count() == r.support, || "support mismatch".into());
            t.check(mutual_information(&mask, y).ok() == Some(r.info_gain), || "solo MI mismatch".into());
        }
        t.check(set.metrics.predicted_positives >= config.min_support, || {
            "conjunction support below floor".into()
        });
    }
    t.check(result.rulesets.len() <= config.max_rulesets_returned, || "too many rule sets".into());
}

fn rule_miner_oracle() -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut nonzero = 0;
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
        let pool = match score_splits(&columns, &y, &config) {
            Ok(p) => p,
            Err(e) => {
                t.fail(format!("instance {instance}: {e}"));
                continue;
            }
        };
        config.k_beam = pool.len().max(1);
        let best = match mine_columns(&columns, &y, &config) {
            Ok(m) => m.rulesets.first().map_or(0.0, |r| r.metrics.info_gain),
            Err(e) => {
                t.fail(format!("instance {instance}: {e}"));
                continue;
            }
        };
        let oracle: Vec<OracleFeature> = columns
            .iter()
            .zip(&groups)
            .map(|(c, &g)| OracleFeature {
                group: g,
                values: c.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
                thresholds: candidate_thresholds(&c.values, &config),
            })
            .collect();
        let expected = exhaustive_rule_search(&oracle, &bits(&y), config.min_support, config.min_rule_value, 4);
        if expected > 0.0 {
            nonzero += 1;
        }
        t.check(best == expected, || format!("instance {instance}: beam {best} vs exhaustive {expected}"));
    }
    t.note(format!("50 oracle instances ({nonzero} with a qualifying rule)"));

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut sets = 0;
    for run in 0..100 {
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
        match mine_columns(&columns, &y, &config) {
            Ok(result) => {
                sets += result.rulesets.len();
                audit(&mut t, &result, &config, &columns, &y);
            }
            Err(e) => t.fail(format!("audit run {run}: {e}")),
        }
    }
    t.note(format!("constraint audit over 100 runs, {sets} rule sets"));
    t
}

fn mi_kernel() -> Tally {
    let mut t = Tally::default();
    match mutual_information(&[1, 0, 0, 0], &[1, 1, 0, 0]) {
        Ok(mi) => {
            t.note(format!("hand example {mi:.6} bits"));
            t.check((mi - 0.3113).abs() < 1e-4, || format!("hand example {mi}"));
        }
        Err(e) => t.fail(e.to_string()),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut asym, mut perfect) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(2..80);
        let s: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
        if let (Ok(a), Ok(b)) = (mutual_information(&s, &y), mutual_information(&y, &s)) {
            asym = asym.max((a - b).abs());
            t.check((a - mutual_information_bits(&bits(&s), &bits(&y))).abs() < 1e-12, || {
                "kernel disagrees with the oracle".into()
            });
        }
        let ones = y.iter().filter(|&&v| v == 1).count();
        if let Ok(mi) = mutual_information(&y, &y) {
            perfect = perfect.max((mi - binary_entropy(ones, n)).abs());
        }
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        if let Ok(mi) = mutual_information(&flipped, &y) {
            perfect = perfect.max((mi - binary_entropy(ones, n)).abs());
        }
    }
    t.note(format!("max asymmetry {asym:.1e}, max |perfect - H| {perfect:.1e}"));
    t.check(asym <= 1e-12, || format!("asymmetry {asym:e}"));
    t.check(perfect <= 1e-12, || format!("perfect split error {perfect:e}"));
    t
}

/// The two-organ, V40-V55 spec whose neighborhood has 49 candidates among 45 organs.
pub fn fixture_spec() -> FeatureSpec {
    FeatureSpec::new(vec!["Cochlea_Ipsi".into(), "Mastoid_Ipsi".into()], Window::default())
}

/// Synthetic design for the signal check: one organ carries both the planted
/// dose groups and the outcome link.
pub fn signal_config(organ: &str) -> SyntheticConfig {
    let mut config = SyntheticConfig {
        planted_organs: vec![organ.into()],
        ..SyntheticConfig::default()
    };
    config.outcome.weights = vec![OrganWeight {
        organ: organ.into(),
        weight: 1.0,
    }];
    config
}

fn confounder_names(config: &SyntheticConfig) -> Vec<String> {
    config.confounders.iter().map(|c| c.name.clone()).collect()
}

fn forward_search() -> Tally {
    let mut t = Tally::default();
    let signal = "Parotid_Ipsi";
    let config = signal_config(signal);
    let confounders = confounder_names(&config);
    let spec = fixture_spec();
    let outcome = OutcomeSpec::default();
    let params = ClusterParams::default();
    let wanted = CandidateEdit {
        kind: EditKind::AddOrgan,
        organ: Some(signal.into()),
    };
    let mut hits = 0;
    for seed in 0..20 {
        let cohort = match generate_synthetic_cohort(&config, seed) {
            Ok(s) => s.cohort,
            Err(e) => {
                t.fail(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let params = ClusterParams { seed, ..params.clone() };
        let input = SearchInput {
            cohort: &cohort,
            spec: &spec,
            params: &params,
            outcome: &outcome,
            confounders: &confounders,
            selected_cluster: None,
            metric: Metric::Bic,
        };
        let report = match evaluate_forward_search(&input, Execution::Parallel) {
            Ok(r) => r,
            Err(e) => {
                t.fail(format!("seed {seed}: {e}"));
                continue;
            }
        };
        t.check(report.entries.len() == 49, || format!("seed {seed}: {} entries", report.entries.len()));
        let best = report
            .entries
            .iter()
            .filter(|e| e.status == Status::Ok)
            .filter_map(|e| e.delta_bic.map(|d| (d, &e.edit)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if best.is_some_and(|(_, edit)| *edit == wanted) {
            hits += 1;
        }
        if seed == 0 {
            match evaluate_forward_search(&input, Execution::Serial) {
                Ok(serial) => {
                    let same = dosestrat_core::pipeline::json_text(&report).ok()
                        == dosestrat_core::pipeline::json_text(&serial).ok()
                        && report.to_csv_string() == serial.to_csv_string();
                    t.check(same, || "parallel and serial reports differ".into());
                    t.note("parallel report byte-identical to serial");
                }
                Err(e) => t.fail(format!("serial run: {e}")),
            }
        }
    }
    t.note(format!("49 entries per report; add({signal}) best delta_bic in {hits}/20 seeds"));
    t.check(hits >= 18, || format!("signal organ best in only {hits}/20 seeds"));
    t
}

fn performance_budget() -> Tally {
    let mut t = Tally::default();
    let config = SyntheticConfig::default();
    let cohort = match generate_synthetic_cohort(&config, 11) {
        Ok(s) => Arc::new(s.cohort),
        Err(e) => {
            t.fail(e.to_string());
            return t;
        }
    };
    let analysis = Analysis {
        spec: fixture_spec(),
        params: ClusterParams::default(),
        outcome: OutcomeSelection {
            confounders: confounder_names(&config),
            ..OutcomeSelection::default()
        },
    };
    let workbench = match Workbench::new(Arc::clone(&cohort), analysis) {
        Ok(w) => w,
        Err(e) => {
            t.fail(e.to_string());
            return t;
        }
    };
    let start = Instant::now();
    let body = workbench.render(&View::AdditiveEffects {
        metric: Metric::Bic,
        format: Format::Json,
    });
    let secs = start.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    t.note(format!(
        "one round: {} patients x {} organs, k = 3 GMM, 3 confounders, 49 candidates in {secs:.2} s on {threads} thread(s)",
        cohort.len(),
        cohort.organs().len()
    ));
    if let Err(e) = body {
        t.fail(e.to_string());
    }
    t.check(secs <= 15.0, || format!("{secs:.2} s exceeds the 15 s budget"));
    t
}

fn defaults() -> Tally {
    let mut t = Tally::default();
    let params = ClusterParams::default();
    t.check(params.k == 3, || format!("k = {}", params.k));
    t.check(params.method == ClusterMethod::BayesianGmm, || format!("method {:?}", params.method));
    let o = OutcomeSelection::default();
    t.check(o.threshold == 4, || format!("threshold {}", o.threshold));
    t.check(o.time_point == "6mo_post", || format!("time point {}", o.time_point));
    match generate_synthetic_cohort(
        &SyntheticConfig {
            n_patients: 200,
            ..SyntheticConfig::default()
        },
        8,
    )
    .and_then(|s| {
        let spec = o.outcome_spec();
        let (si, ti) = spec.validate(&s.cohort)?;
        let labels = binarize_outcome(&s.cohort, &spec)?.labels;
        Ok(s.cohort.patients().iter().map(|p| p.rating(si, ti)).zip(labels).collect::<Vec<_>>())
    }) {
        Ok(pairs) => {
            let at_four = pairs.iter().filter(|(r, _)| *r == Some(4)).count();
            t.check(at_four > 0, || "no rating of exactly 4 to probe the boundary".into());
            t.check(pairs.iter().all(|(r, l)| r.map(|r| u8::from(r > 4)) == *l), || {
                "severity is not rating > 4".into()
            });
        }
        Err(e) => t.fail(e.to_string()),
    }
    t.check(VX_LEVELS.to_vec() == (1..=19).map(|i| i * 5).collect::<Vec<u8>>(), || {
        "VX grid is not V5..V95 step 5".into()
    });
    let keys: Vec<String> = FeatureKey::all().map(|k| k.to_string()).collect();
    t.check(keys.len() == 21 && keys[0] == "V5" && keys[18] == "V95" && keys[19..] == ["mean", "max"], || {
        format!("feature keys {keys:?}")
    });
    t.check(layout::default_organs().len() == 45, || "default organ list is not 45 organs".into());
    let rules = RulesRequest::default();
    t.check(rules.target == RuleTarget::Outcome, || "default rule target".into());
    t.note("k = 3 Bayesian GMM, rating > 4 at 6mo_post, V5..V95 step 5 + mean/max, 45 organs");
    t
}
