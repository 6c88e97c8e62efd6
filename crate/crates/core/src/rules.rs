//! Constrained dose-threshold rule mining.
//!
//! A rule is a split `value >= t` (or `value < t`) on one organ's DVH feature; a
//! rule set is an AND of rules on distinct organs sharing one direction. The miner
//! runs a beam search that maximizes mutual information with a binary target.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::cohort::{Cohort, FeatureKey};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::util::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Geq,
    Lt,
}

impl Direction {
    pub fn op(self) -> &'static str {
        match self {
            Direction::Geq => ">=",
            Direction::Lt => "<",
        }
    }

    pub fn satisfied(self, value: f64, threshold: f64) -> bool {
        match self {
            Direction::Geq => value >= threshold,
            Direction::Lt => value < threshold,
        }
    }
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.op())
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            ">=" => Ok(Direction::Geq),
            "<" => Ok(Direction::Lt),
            other => Err(de::Error::custom(format!("op must be \">=\" or \"<\", got {other:?}"))),
        }
    }
}

/// Which direction(s) the miner explores. `BothTry` mines each direction
/// separately and merges the results; every rule set still has one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMode {
    Geq,
    Lt,
    BothTry,
}

impl DirectionMode {
    fn directions(self) -> &'static [Direction] {
        match self {
            DirectionMode::Geq => &[Direction::Geq],
            DirectionMode::Lt => &[Direction::Lt],
            DirectionMode::BothTry => &[Direction::Geq, Direction::Lt],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdGrid {
    /// `thresholds_per_feature` empirical quantiles at `i / (T + 1)`.
    Quantile,
    /// Every midpoint between consecutive distinct observed values.
    Midpoints,
}

/// How "informative" is judged for the per-rule floor `min_rule_value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleValue {
    /// Solo mutual information in bits.
    MutualInformation,
    /// Solo precision (target rate among satisfying patients).
    Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerConfig {
    pub k_beam: usize,
    pub max_rules: usize,
    pub min_rule_value: f64,
    pub rule_value: RuleValue,
    pub thresholds_per_feature: usize,
    pub threshold_grid: ThresholdGrid,
    pub min_support: usize,
    pub direction: DirectionMode,
    pub max_rulesets_returned: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            k_beam: 5,
            max_rules: 4,
            min_rule_value: 0.01,
            rule_value: RuleValue::MutualInformation,
            thresholds_per_feature: 20,
            threshold_grid: ThresholdGrid::Quantile,
            min_support: 10,
            direction: DirectionMode::Geq,
            max_rulesets_returned: 10,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_beam", self.k_beam),
            ("max_rules", self.max_rules),
            ("thresholds_per_feature", self.thresholds_per_feature),
            ("min_support", self.min_support),
            ("max_rulesets_returned", self.max_rulesets_returned),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        if !(self.min_rule_value.is_finite() && self.min_rule_value >= 0.0) {
            return Err(Error::invalid("min_rule_value", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Feature space the miner draws splits from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleScope {
    /// The organs and keys of a feature spec.
    Spec(FeatureSpec),
    /// Every organ of the cohort with all 21 feature keys.
    AllFeatures,
}

/// One feature's values across the labeled patients; `None` marks missing dose.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub organ: String,
    pub feature: FeatureKey,
    pub values: Vec<Option<f64>>,
}

/// Columns of `scope` for the cohort rows in `rows`.
pub fn feature_columns(cohort: &Cohort, scope: &RuleScope, rows: &[usize]) -> Result<Vec<FeatureColumn>> {
    let (organs, keys): (Vec<usize>, Vec<FeatureKey>) = match scope {
        RuleScope::Spec(spec) => (spec.check_against(cohort)?, spec.keys()),
        RuleScope::AllFeatures => ((0..cohort.organs().len()).collect(), FeatureKey::all().collect()),
    };
    let patients = cohort.patients();
    let mut columns = Vec::with_capacity(organs.len() * keys.len());
    for &o in &organs {
        for &key in &keys {
            columns.push(FeatureColumn {
                organ: cohort.organs()[o].name().to_string(),
                feature: key,
                values: rows.iter().map(|&r| patients[r].dose(o, key)).collect(),
            });
        }
    }
    Ok(columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub organ: String,
    pub feature: FeatureKey,
    pub op: Direction,
    pub threshold: f64,
    /// Mutual information of this rule alone with the target, in bits.
    #[serde(default)]
    pub info_gain: f64,
    /// Patients satisfying this rule alone.
    #[serde(default)]
    pub support: usize,
}

impl Rule {
    fn cmp_key(&self, other: &Rule) -> Ordering {
        self.organ
            .cmp(&other.organ)
            .then(self.feature.cmp(&other.feature))
            .then(self.threshold.total_cmp(&other.threshold))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub positives: usize,
    pub predicted_positives: usize,
    pub true_positives: usize,
    /// Mutual information of the conjunction with the target, in bits.
    pub info_gain: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    fn from_counts(n: usize, positives: usize, predicted: usize, true_pos: usize) -> Metrics {
        let precision = ratio(true_pos, predicted);
        let recall = ratio(true_pos, positives);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            n,
            positives,
            predicted_positives: predicted,
            true_positives: true_pos,
            info_gain: mi_counts(n, positives, predicted, true_pos),
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    /// Ordered by solo information gain, most informative first.
    pub rules: Vec<Rule>,
    pub metrics: Metrics,
}

impl RuleSet {
    fn cmp_rank(&self, other: &RuleSet) -> Ordering {
        other
            .metrics
            .info_gain
            .total_cmp(&self.metrics.info_gain)
            .then(self.rules.len().cmp(&other.rules.len()))
            .then(other.metrics.f1.total_cmp(&self.metrics.f1))
            .then_with(|| {
                for (a, b) in self.rules.iter().zip(&other.rules) {
                    let c = a.cmp_key(b);
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                self.rules[0].op.cmp(&other.rules[0].op)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningResult {
    pub rulesets: Vec<RuleSet>,
    /// Splits surviving the support and informativeness floors.
    pub pool_size: usize,
    /// Labeled patients the miner saw.
    pub n: usize,
    pub positives: usize,
    /// Why the list is empty, when it is.
    pub diagnostic: Option<String>,
}

/// `H(Y) - H(Y|S)` in bits.
pub fn mutual_information(split: &[u8], target: &[u8]) -> Result<f64> {
    if split.len() != target.len() {
        return Err(Error::invalid(
            "split",
            format!("length {} does not match target length {}", split.len(), target.len()),
        ));
    }
    if split.is_empty() {
        return Err(Error::invalid("split", "vectors must be non-empty"));
    }
    let positives = target.iter().filter(|&&t| t != 0).count();
    let support = split.iter().filter(|&&s| s != 0).count();
    let joint = split.iter().zip(target).filter(|(s, t)| **s != 0 && **t != 0).count();
    Ok(mi_counts(split.len(), positives, support, joint))
}

fn entropy(ones: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = ones as f64 / n as f64;
    let mut h = 0.0;
    for q in [p, 1.0 - p] {
        if q > 0.0 {
            h -= q * q.log2();
        }
    }
    h
}

fn mi_counts(n: usize, positives: usize, support: usize, joint: usize) -> f64 {
    let nf = n as f64;
    let mut conditional = 0.0;
    conditional += support as f64 / nf * entropy(joint, support);
    conditional += (n - support) as f64 / nf * entropy(positives - joint, n - support);
    entropy(positives, n) - conditional
}

/// Fixed-width bitset over patients.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn from_fn(n: usize, f: impl Fn(usize) -> bool) -> Bits {
        let mut words = vec![0u64; n.div_ceil(64)];
        for i in 0..n {
            if f(i) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Bits(words)
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn and_count(&self, other: &Bits) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

/// Candidate thresholds for one feature.
pub fn candidate_thresholds(values: &[Option<f64>], config: &MinerConfig) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = match config.threshold_grid {
        ThresholdGrid::Quantile => {
            let t = config.thresholds_per_feature;
            (1..=t)
                .map(|i| quantile_sorted(&sorted, i as f64 / (t + 1) as f64))
                .collect()
        }
        ThresholdGrid::Midpoints => {
            sorted.dedup();
            sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        }
    };
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredSplit {
    pub organ: String,
    pub feature: FeatureKey,
    pub op: Direction,
    pub threshold: f64,
    pub support: usize,
    pub info_gain: f64,
    pub precision: f64,
    /// First column of the same organ; equal values mean a shared organ.
    #[serde(skip)]
    column_organ: usize,
    #[serde(skip)]
    mask: Bits,
}

impl ScoredSplit {
    fn rule(&self) -> Rule {
        Rule {
            organ: self.organ.clone(),
            feature: self.feature,
            op: self.op,
            threshold: self.threshold,
            info_gain: self.info_gain,
            support: self.support,
        }
    }

    fn cmp_key(&self, other: &ScoredSplit) -> Ordering {
        self.organ
            .cmp(&other.organ)
            .then(self.feature.cmp(&other.feature))
            .then(self.threshold.total_cmp(&other.threshold))
    }

    fn value(&self, metric: RuleValue) -> f64 {
        match metric {
            RuleValue::MutualInformation => self.info_gain,
            RuleValue::Precision => self.precision,
        }
    }
}

/// Every candidate split of `columns` in direction `dir`, scored but not pruned.
fn score_all(columns: &[FeatureColumn], target: &Bits, n: usize, config: &MinerConfig, dir: Direction) -> Vec<ScoredSplit> {
    let positives = target.count();
    let mut out = Vec::new();
    for col in columns {
        let organ = columns.iter().position(|c| c.organ == col.organ).unwrap_or(0);
        for t in candidate_thresholds(&col.values, config) {
            let mask = Bits::from_fn(n, |i| col.values[i].is_some_and(|v| dir.satisfied(v, t)));
            let support = mask.count();
            let joint = mask.and_count(target);
            out.push(ScoredSplit {
                organ: col.organ.clone(),
                feature: col.feature,
                op: dir,
                threshold: t,
                support,
                info_gain: mi_counts(n, positives, support, joint),
                precision: ratio(joint, support),
                column_organ: organ,
                mask,
            });
        }
    }
    out
}

fn check_target(target: &[u8]) -> Result<usize> {
    if let Some(bad) = target.iter().find(|&&t| t > 1) {
        return Err(Error::invalid("target", format!("values must be 0 or 1 (got {bad})")));
    }
    let positives = target.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == target.len() {
        return Err(Error::SingleClass(target.len()));
    }
    Ok(positives)
}

fn target_bits(target: &[u8]) -> Bits {
    Bits::from_fn(target.len(), |i| target[i] == 1)
}

/// Scored splits of `columns` surviving the support and informativeness floors,
/// ordered by information gain (ties by organ, feature, threshold).
pub fn score_splits(columns: &[FeatureColumn], target: &[u8], config: &MinerConfig) -> Result<Vec<ScoredSplit>> {
    config.validate()?;
    check_columns(columns, target.len())?;
    check_target(target)?;
    let bits = target_bits(target);
    let mut pool = Vec::new();
    for &dir in config.direction.directions() {
        pool.extend(prune(score_all(columns, &bits, target.len(), config, dir), config));
    }
    pool.sort_by(|a, b| b.info_gain.total_cmp(&a.info_gain).then(a.cmp_key(b)).then(a.op.cmp(&b.op)));
    Ok(pool)
}

/// [`score_splits`] over the features of `scope`, for every cohort patient.
pub fn enumerate_splits(cohort: &Cohort, scope: &RuleScope, target: &[u8], config: &MinerConfig) -> Result<Vec<ScoredSplit>> {
    check_len(cohort, target.len())?;
    let rows: Vec<usize> = (0..cohort.len()).collect();
    score_splits(&feature_columns(cohort, scope, &rows)?, target, config)
}

fn prune(splits: Vec<ScoredSplit>, config: &MinerConfig) -> Vec<ScoredSplit> {
    splits
        .into_iter()
        .filter(|s| s.support >= config.min_support && s.value(config.rule_value) >= config.min_rule_value)
        .collect()
}

fn check_columns(columns: &[FeatureColumn], n: usize) -> Result<()> {
    match columns.iter().find(|c| c.values.len() != n) {
        Some(c) => Err(Error::invalid(
            "target",
            format!("feature {} {} has {} values, target has {n}", c.organ, c.feature, c.values.len()),
        )),
        None => Ok(()),
    }
}

fn check_len(cohort: &Cohort, len: usize) -> Result<()> {
    if len != cohort.len() {
        return Err(Error::invalid(
            "target",
            format!("length {len} does not match cohort size {}", cohort.len()),
        ));
    }
    Ok(())
}

/// A rule set in the search: pool indices (ascending, which is also rule order
/// since the pool is sorted by solo information gain) and its conjunction.
#[derive(Clone)]
struct Node {
    members: Vec<usize>,
    mask: Bits,
    metrics: Metrics,
}

impl Node {
    fn new(members: Vec<usize>, mask: Bits, n: usize, positives: usize, target: &Bits) -> Node {
        let metrics = Metrics::from_counts(n, positives, mask.count(), mask.and_count(target));
        Node { members, mask, metrics }
    }

    fn rank(&self, other: &Node, pool: &[ScoredSplit]) -> Ordering {
        other
            .metrics
            .info_gain
            .total_cmp(&self.metrics.info_gain)
            .then(self.members.len().cmp(&other.members.len()))
            .then(other.metrics.f1.total_cmp(&self.metrics.f1))
            .then_with(|| {
                self.members
                    .iter()
                    .zip(&other.members)
                    .map(|(&a, &b)| pool[a].cmp_key(&pool[b]))
                    .find(|c| c.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }

    /// Upper bound on the information gain of any conjunction that refines this
    /// one and keeps `min_support` patients. MI is convex in the (true positive,
    /// false positive) counts of the split, so the maximum over the feasible
    /// polygon `a <= tp, b <= fp, a + b >= m` sits at one of its corners.
    fn bound(&self, min_support: usize) -> f64 {
        let m = &self.metrics;
        let (tp, fp) = (m.true_positives, m.predicted_positives - m.true_positives);
        let corners = [
            (tp, fp),
            (tp, min_support.saturating_sub(tp)),
            (min_support.saturating_sub(fp), fp),
        ];
        corners
            .iter()
            .map(|&(a, b)| mi_counts(m.n, m.positives, a + b, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn ruleset(&self, pool: &[ScoredSplit]) -> RuleSet {
        RuleSet {
            rules: self.members.iter().map(|&i| pool[i].rule()).collect(),
            metrics: self.metrics,
        }
    }
}

/// The `cap` best distinct nodes seen so far.
struct TopList<'a> {
    cap: usize,
    pool: &'a [ScoredSplit],
    nodes: Vec<Node>,
}

impl<'a> TopList<'a> {
    fn new(cap: usize, pool: &'a [ScoredSplit]) -> Self {
        TopList {
            cap,
            pool,
            nodes: Vec::with_capacity(cap + 1),
        }
    }

    fn offer(&mut self, node: &Node) {
        let full = self.nodes.len() == self.cap;
        if full && node.rank(&self.nodes[self.cap - 1], self.pool).is_ge() {
            return;
        }
        if self.nodes.iter().any(|n| n.members == node.members) {
            return;
        }
        let at = self
            .nodes
            .partition_point(|n| n.rank(node, self.pool).is_lt());
        self.nodes.insert(at, node.clone());
        self.nodes.truncate(self.cap);
    }
}

/// Beam search over one direction's pool (sorted by solo information gain).
///
/// Every beam member is extended by each compatible split; each member passes on
/// its `k_beam` best extensions. A branch is dropped once its bound shows no
/// refinement can beat the best information gain found, so the search ends when
/// no extension can improve it. With `k_beam` at least the pool size this
/// enumerates every admissible conjunction.
fn beam(pool: &[ScoredSplit], n: usize, target: &Bits, config: &MinerConfig) -> Vec<RuleSet> {
    let positives = target.count();
    let slack = 1e-12;
    let mut found = TopList::new(config.max_rulesets_returned, pool);
    let mut roots = TopList::new(config.k_beam, pool);
    for i in 0..pool.len() {
        let node = Node::new(vec![i], pool[i].mask.clone(), n, positives, target);
        found.offer(&node);
        roots.offer(&node);
    }
    let mut best = found.nodes.first().map_or(f64::NEG_INFINITY, |b| b.metrics.info_gain);
    let mut frontier: Vec<Node> = roots
        .nodes
        .into_iter()
        .filter(|b| b.bound(config.min_support) > best - slack)
        .collect();

    for _depth in 2..=config.max_rules {
        if frontier.is_empty() {
            break;
        }
        let children: Vec<(Vec<Node>, Vec<Node>)> = frontier
            .par_iter()
            .map(|parent| {
                let mut kept = TopList::new(config.k_beam, pool);
                let mut top = TopList::new(config.max_rulesets_returned, pool);
                for j in 0..pool.len() {
                    if parent.members.iter().any(|&m| pool[m].column_organ == pool[j].column_organ) {
                        continue;
                    }
                    let predicted = parent.mask.and_count(&pool[j].mask);
                    if predicted < config.min_support {
                        continue;
                    }
                    let mut members = parent.members.clone();
                    let at = members.partition_point(|&m| m < j);
                    members.insert(at, j);
                    let node = Node::new(members, parent.mask.and(&pool[j].mask), n, positives, target);
                    top.offer(&node);
                    kept.offer(&node);
                }
                (kept.nodes, top.nodes)
            })
            .collect();
        let mut next: Vec<Node> = Vec::new();
        for (kept, top) in children {
            for node in &top {
                found.offer(node);
            }
            next.extend(kept);
        }
        best = found.nodes.first().map_or(best, |b| b.metrics.info_gain);
        next.sort_by(|a, b| a.members.cmp(&b.members));
        next.dedup_by(|a, b| a.members == b.members);
        frontier = next
            .into_iter()
            .filter(|b| b.bound(config.min_support) > best - slack)
            .collect();
    }
    found.nodes.iter().map(|node| node.ruleset(pool)).collect()
}

/// Mines rule sets from explicit feature columns aligned with `target`.
pub fn mine_columns(columns: &[FeatureColumn], target: &[u8], config: &MinerConfig) -> Result<MiningResult> {
    config.validate()?;
    check_columns(columns, target.len())?;
    let n = target.len();
    let positives = target.iter().filter(|&&t| t == 1).count();
    let empty = |pool_size, msg: String| MiningResult {
        rulesets: Vec::new(),
        pool_size,
        n,
        positives,
        diagnostic: Some(msg),
    };
    if let Err(e) = check_target(target) {
        return match e {
            Error::SingleClass(_) => Ok(empty(0, format!(
                "target is constant ({positives} of {n} positive); nothing to explain"
            ))),
            other => Err(other),
        };
    }
    let bits = target_bits(target);
    let mut all = Vec::new();
    let mut pool_size = 0;
    for &dir in config.direction.directions() {
        let mut pool = prune(score_all(columns, &bits, n, config, dir), config);
        pool.sort_by(|a, b| b.info_gain.total_cmp(&a.info_gain).then(a.cmp_key(b)));
        pool_size += pool.len();
        all.extend(beam(&pool, n, &bits, config));
    }
    if pool_size == 0 {
        return Ok(empty(0, format!(
            "no split reaches support {} with rule value {}",
            config.min_support, config.min_rule_value
        )));
    }
    all.sort_by(|a, b| a.cmp_rank(b));
    all.truncate(config.max_rulesets_returned);
    Ok(MiningResult {
        rulesets: all,
        pool_size,
        n,
        positives,
        diagnostic: None,
    })
}

/// Mines rule sets explaining `target`, one entry per cohort patient.
pub fn mine_rules(cohort: &Cohort, target: &[u8], scope: &RuleScope, config: &MinerConfig) -> Result<MiningResult> {
    let labels: Vec<Option<u8>> = target.iter().map(|&t| Some(t)).collect();
    mine_rules_masked(cohort, &labels, scope, config)
}

/// As [`mine_rules`], skipping patients whose label is `None`.
pub fn mine_rules_masked(
    cohort: &Cohort,
    target: &[Option<u8>],
    scope: &RuleScope,
    config: &MinerConfig,
) -> Result<MiningResult> {
    check_len(cohort, target.len())?;
    let rows: Vec<usize> = (0..target.len()).filter(|&i| target[i].is_some()).collect();
    let y: Vec<u8> = rows.iter().map(|&i| target[i].unwrap_or(0)).collect();
    let columns = feature_columns(cohort, scope, &rows)?;
    mine_columns(&columns, &y, config)
}

/// Where a patient left the rule cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// 0-based index of the first rule the patient fails.
    Failed(usize),
    Pass,
}

impl Serialize for Stage {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Stage::Failed(i) => s.serialize_u64(*i as u64),
            Stage::Pass => s.serialize_str("pass"),
        }
    }
}

impl<'de> Deserialize<'de> for Stage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Stage;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a rule index or \"pass\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Stage, E> {
                Ok(Stage::Failed(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Stage, E> {
                match v {
                    "pass" => Ok(Stage::Pass),
                    _ => Err(E::custom(format!("unknown stage {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub patient: String,
    pub target: u8,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub stage: Stage,
    pub true_class: usize,
    pub not_true_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvaluation {
    pub metrics: Metrics,
    /// Labeled patients in cohort order.
    pub trace: Vec<TraceEntry>,
    /// One stratum per rule index, then the pass stratum.
    pub strata: Vec<Stratum>,
    /// Patients still satisfying the first `i` rules, for `i = 0..=rules.len()`.
    pub remaining: Vec<usize>,
}

/// Runs every labeled patient through `rules` in order.
pub fn evaluate_ruleset(rules: &[Rule], cohort: &Cohort, target: &[u8]) -> Result<RuleEvaluation> {
    let labels: Vec<Option<u8>> = target.iter().map(|&t| Some(t)).collect();
    evaluate_ruleset_masked(rules, cohort, &labels)
}

/// As [`evaluate_ruleset`], skipping patients whose label is `None`.
pub fn evaluate_ruleset_masked(rules: &[Rule], cohort: &Cohort, target: &[Option<u8>]) -> Result<RuleEvaluation> {
    check_len(cohort, target.len())?;
    let organs: Vec<usize> = rules
        .iter()
        .map(|r| cohort.organ_index(&r.organ))
        .collect::<Result<_>>()?;
    for r in rules {
        if !r.threshold.is_finite() {
            return Err(Error::invalid("threshold", "must be finite"));
        }
    }
    if let Some(bad) = target.iter().flatten().find(|&&t| t > 1) {
        return Err(Error::invalid("target", format!("values must be 0 or 1 (got {bad})")));
    }
    let mut trace = Vec::new();
    let mut strata: Vec<Stratum> = (0..rules.len())
        .map(Stage::Failed)
        .chain([Stage::Pass])
        .map(|stage| Stratum {
            stage,
            true_class: 0,
            not_true_class: 0,
        })
        .collect();
    let mut remaining = vec![0usize; rules.len() + 1];
    for (p, label) in cohort.patients().iter().zip(target) {
        let Some(y) = *label else { continue };
        let failed = rules.iter().zip(&organs).position(|(r, &o)| {
            !p.dose(o, r.feature).is_some_and(|v| r.op.satisfied(v, r.threshold))
        });
        let depth = failed.unwrap_or(rules.len());
        for slot in &mut remaining[..=depth] {
            *slot += 1;
        }
        let stratum = &mut strata[depth];
        if y == 1 {
            stratum.true_class += 1;
        } else {
            stratum.not_true_class += 1;
        }
        trace.push(TraceEntry {
            patient: p.id.clone(),
            target: y,
            stage: failed.map_or(Stage::Pass, Stage::Failed),
        });
    }
    let n = trace.len();
    let positives = trace.iter().filter(|t| t.target == 1).count();
    let pass = &strata[rules.len()];
    let metrics = Metrics::from_counts(n, positives, pass.true_class + pass.not_true_class, pass.true_class);
    Ok(RuleEvaluation {
        metrics,
        trace,
        strata,
        remaining,
    })
}

#[cfg(test)]
mod tests;
