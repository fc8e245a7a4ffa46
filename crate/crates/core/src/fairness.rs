//! Equal-opportunity auditing and per-subgroup threshold calibration.
//!
//! Predictions are `score >= threshold` throughout, so every threshold
//! search runs over the finite set of observed scores.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Group, ProtectedFeature, SubgroupPartition};
use crate::metrics::{self, Interval, MetricsError, ProportionTest};

/// Confidence level of the recall-difference interval attached to audits.
pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FairnessError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("no positives available")]
    NoPositives,
    #[error("group `{0}` has no positives")]
    GroupWithoutPositives(Group),
    #[error("target sensitivity {0} is unachievable")]
    UnachievableTarget(f64),
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("minimum sensitivity {0} outside (0, 1]")]
    InvalidFloor(f64),
    #[error("audit needs exactly two groups, partition has {0}")]
    GroupCount(usize),
    #[error("policy has no threshold for group `{0}`")]
    MissingGroup(Group),
    #[error("partition covers {partition} records but {scores} scores were given")]
    Coverage { partition: usize, scores: usize },
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How the single global threshold of a naive model is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ThresholdRule {
    /// Maximizes `TPR - FPR`.
    Youden,
    Fixed(f64),
    /// Largest threshold with overall sensitivity at least the value.
    TargetSensitivity(f64),
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Youden => f.write_str("youden"),
            ThresholdRule::Fixed(t) => write!(f, "fixed:{t}"),
            ThresholdRule::TargetSensitivity(s) => write!(f, "sensitivity:{s}"),
        }
    }
}

impl From<ThresholdRule> for String {
    fn from(rule: ThresholdRule) -> Self {
        rule.to_string()
    }
}

impl TryFrom<String> for ThresholdRule {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for ThresholdRule {
    type Err = String;

    /// `youden`, `fixed:<tau>` or `sensitivity:<s>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| v.parse::<f64>().map_err(|e| e.to_string());
        match s.split_once(':') {
            None if s == "youden" => Ok(ThresholdRule::Youden),
            Some(("fixed", v)) => parse(v).map(ThresholdRule::Fixed),
            Some(("sensitivity", v)) => parse(v).map(ThresholdRule::TargetSensitivity),
            _ => Err(alloc::format!(
                "unknown threshold rule `{s}` (expected youden, fixed:<t> or sensitivity:<s>)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PolicyKind {
    Global(f64),
    PerGroup(BTreeMap<Group, f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    /// Feature a per-group policy was built for.
    pub feature: Option<ProtectedFeature>,
    pub kind: PolicyKind,
    /// Sensitivity floor in force when the policy was calibrated.
    pub min_sensitivity: Option<f64>,
}

impl ThresholdPolicy {
    pub fn global(threshold: f64) -> Self {
        Self {
            feature: None,
            kind: PolicyKind::Global(threshold),
            min_sensitivity: None,
        }
    }

    pub fn threshold_for(&self, group: Group) -> Result<f64, FairnessError> {
        match &self.kind {
            PolicyKind::Global(t) => Ok(*t),
            PolicyKind::PerGroup(map) => map
                .get(&group)
                .copied()
                .ok_or(FairnessError::MissingGroup(group)),
        }
    }

    /// All thresholds in `[0, 1]`.
    pub fn validate(&self) -> Result<(), FairnessError> {
        let check = |t: f64| {
            if (0.0..=1.0).contains(&t) {
                Ok(())
            } else {
                Err(FairnessError::ThresholdOutOfRange(t))
            }
        };
        match &self.kind {
            PolicyKind::Global(t) => check(*t),
            PolicyKind::PerGroup(map) => map.values().try_for_each(|t| check(*t)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecall {
    pub group: Group,
    pub true_positives: u64,
    pub positives: u64,
    pub recall: f64,
}

/// Result of the equal-opportunity test for one protected feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasAudit {
    pub feature: ProtectedFeature,
    pub groups: [GroupRecall; 2],
    pub test: ProportionTest,
    /// Interval for `recall(groups[0]) - recall(groups[1])`.
    pub ci: Interval,
    pub biased: bool,
    pub alpha_effective: f64,
}

impl BiasAudit {
    pub fn recall_gap(&self) -> f64 {
        libm::fabs(self.groups[0].recall - self.groups[1].recall)
    }
}

/// An audit, or the reason it could not be run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum AuditOutcome {
    Tested(BiasAudit),
    Untestable { reason: Untestable },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Untestable {
    /// A group has no positive examples.
    NoPositives { group: Group },
    /// The evaluated split holds a single class.
    SingleClass,
}

impl AuditOutcome {
    pub fn tested(&self) -> Option<&BiasAudit> {
        match self {
            AuditOutcome::Tested(a) => Some(a),
            AuditOutcome::Untestable { .. } => None,
        }
    }

    pub fn is_biased(&self) -> bool {
        self.tested().is_some_and(|a| a.biased)
    }

    /// Maps the untestable audit errors to [`AuditOutcome::Untestable`] and
    /// passes every other error through.
    pub fn from_audit(r: Result<BiasAudit, FairnessError>) -> Result<Self, FairnessError> {
        match r {
            Ok(a) => Ok(AuditOutcome::Tested(a)),
            Err(FairnessError::GroupWithoutPositives(group)) => Ok(AuditOutcome::Untestable {
                reason: Untestable::NoPositives { group },
            }),
            Err(FairnessError::SingleClass | FairnessError::NoPositives) => {
                Ok(AuditOutcome::Untestable {
                    reason: Untestable::SingleClass,
                })
            }
            Err(e) => Err(e),
        }
    }
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), FairnessError> {
    if scores.len() != labels.len() {
        return Err(FairnessError::LengthMismatch(scores.len(), labels.len()));
    }
    Ok(())
}

fn check_coverage(scores: &[f64], partition: &SubgroupPartition) -> Result<(), FairnessError> {
    if partition.len() != scores.len() {
        return Err(FairnessError::Coverage {
            partition: partition.len(),
            scores: scores.len(),
        });
    }
    Ok(())
}

/// Largest `tau` among `positive_scores` with `#{s >= tau} / n >= target`.
fn threshold_for_sensitivity(positive_scores: &[f64], target: f64) -> Result<f64, FairnessError> {
    let p = positive_scores.len();
    if p == 0 {
        return Err(FairnessError::NoPositives);
    }
    if target.is_nan() || target > 1.0 {
        return Err(FairnessError::UnachievableTarget(target));
    }
    let mut sorted = positive_scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let pf = p as f64;
    // Smallest k with k / p >= target, evaluated with the same division that
    // sensitivity() uses so the floor holds exactly.
    let mut k = (libm::ceil(target * pf) as usize).clamp(1, p);
    while k > 1 && (k - 1) as f64 / pf >= target {
        k -= 1;
    }
    while k < p && (k as f64 / pf) < target {
        k += 1;
    }
    Ok(sorted[k - 1])
}

pub fn choose_naive_threshold(
    scores: &[f64],
    labels: &[bool],
    rule: ThresholdRule,
) -> Result<ThresholdPolicy, FairnessError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    let threshold = match rule {
        ThresholdRule::Fixed(t) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(FairnessError::ThresholdOutOfRange(t));
            }
            t
        }
        ThresholdRule::TargetSensitivity(s) => {
            if n_pos == 0 {
                return Err(FairnessError::NoPositives);
            }
            if s.is_nan() || s > 1.0 {
                return Err(FairnessError::UnachievableTarget(s));
            }
            let pos: Vec<f64> = scores
                .iter()
                .zip(labels)
                .filter(|(_, &y)| y)
                .map(|(&s, _)| s)
                .collect();
            threshold_for_sensitivity(&pos, s)?
        }
        ThresholdRule::Youden => {
            if n_pos == 0 || n_neg == 0 {
                return Err(FairnessError::SingleClass);
            }
            youden_threshold(scores, labels, n_pos as u64, n_neg as u64)
        }
    };
    Ok(ThresholdPolicy::global(threshold))
}

/// Sweeps observed scores from high to low. `J = tp/P - fp/N` is compared as
/// `tp*N - fp*P` in integers; later (smaller) thresholds win ties.
fn youden_threshold(scores: &[f64], labels: &[bool], n_pos: u64, n_neg: u64) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best: Option<(i128, f64)> = None;
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        while i < order.len() && scores[order[i]] == tau {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let j = i128::from(tp) * i128::from(n_neg) - i128::from(fp) * i128::from(n_pos);
        if best.is_none_or(|(b, _)| j >= b) {
            best = Some((j, tau));
        }
    }
    best.map(|(_, t)| t).unwrap_or(0.5)
}

/// Runs the two-proportion test on per-group true-positive counts.
pub fn audit(
    scores: &[f64],
    labels: &[bool],
    partition: &SubgroupPartition,
    policy: &ThresholdPolicy,
    alpha_effective: f64,
) -> Result<BiasAudit, FairnessError> {
    check_lengths(scores, labels)?;
    check_coverage(scores, partition)?;
    if partition.groups().len() != 2 {
        return Err(FairnessError::GroupCount(partition.groups().len()));
    }
    let mut recalls = Vec::with_capacity(2);
    for (group, members) in partition.groups() {
        let tau = policy.threshold_for(*group)?;
        let (mut tp, mut pos) = (0u64, 0u64);
        for &i in members {
            if labels[i] {
                pos += 1;
                tp += u64::from(scores[i] >= tau);
            }
        }
        if pos == 0 {
            return Err(FairnessError::GroupWithoutPositives(*group));
        }
        recalls.push(GroupRecall {
            group: *group,
            true_positives: tp,
            positives: pos,
            recall: tp as f64 / pos as f64,
        });
    }
    let (a, b) = (recalls[0], recalls[1]);
    let test = metrics::two_proportion_ztest(
        a.true_positives,
        a.positives,
        b.true_positives,
        b.positives,
    )?;
    let ci = metrics::recall_diff_ci(
        a.true_positives,
        a.positives,
        b.true_positives,
        b.positives,
        CI_LEVEL,
    )?;
    Ok(BiasAudit {
        feature: partition.feature(),
        groups: [a, b],
        biased: test.p_value < alpha_effective,
        test,
        ci,
        alpha_effective,
    })
}

/// A calibrated policy together with the sensitivity it targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub policy: ThresholdPolicy,
    pub target: f64,
}

/// Common sensitivity target: the floor, or the best group's recall under
/// the incoming policy when that is higher.
pub fn equal_opportunity_target(
    scores: &[f64],
    labels: &[bool],
    partition: &SubgroupPartition,
    naive: &ThresholdPolicy,
    min_sensitivity: f64,
) -> Result<f64, FairnessError> {
    check_lengths(scores, labels)?;
    check_coverage(scores, partition)?;
    let mut best: f64 = 0.0;
    for (group, members) in partition.groups() {
        let tau = naive.threshold_for(*group)?;
        let (mut tp, mut pos) = (0u64, 0u64);
        for &i in members.iter().filter(|&&i| labels[i]) {
            pos += 1;
            tp += u64::from(scores[i] >= tau);
        }
        if pos == 0 {
            return Err(FairnessError::GroupWithoutPositives(*group));
        }
        best = best.max(tp as f64 / pos as f64);
    }
    Ok(best.max(min_sensitivity))
}

/// Per-group thresholds that bring every group to at least `target`
/// sensitivity: each is the largest observed positive score of the group
/// that still meets the target.
pub fn calibrate_to_target(
    scores: &[f64],
    labels: &[bool],
    partition: &SubgroupPartition,
    target: f64,
    min_sensitivity: f64,
) -> Result<ThresholdPolicy, FairnessError> {
    check_lengths(scores, labels)?;
    check_coverage(scores, partition)?;
    if target > 1.0 {
        return Err(FairnessError::UnachievableTarget(target));
    }
    let mut map = BTreeMap::new();
    for (group, members) in partition.groups() {
        let pos: Vec<f64> = members
            .iter()
            .filter(|&&i| labels[i])
            .map(|&i| scores[i])
            .collect();
        if pos.is_empty() {
            return Err(FairnessError::GroupWithoutPositives(*group));
        }
        map.insert(*group, threshold_for_sensitivity(&pos, target)?);
    }
    Ok(ThresholdPolicy {
        feature: Some(partition.feature()),
        kind: PolicyKind::PerGroup(map),
        min_sensitivity: Some(min_sensitivity),
    })
}

/// Equalizes sensitivities at `max(min_sensitivity, best group recall under
/// naive)`.
pub fn calibrate_equal_opportunity(
    scores: &[f64],
    labels: &[bool],
    partition: &SubgroupPartition,
    naive: &ThresholdPolicy,
    min_sensitivity: f64,
) -> Result<Calibration, FairnessError> {
    if !(min_sensitivity > 0.0 && min_sensitivity <= 1.0) {
        return Err(FairnessError::InvalidFloor(min_sensitivity));
    }
    let target = equal_opportunity_target(scores, labels, partition, naive, min_sensitivity)?;
    let policy = calibrate_to_target(scores, labels, partition, target, min_sensitivity)?;
    Ok(Calibration { policy, target })
}

/// `score_i >= threshold(group(i))`.
pub fn apply_policy(
    scores: &[f64],
    partition: &SubgroupPartition,
    policy: &ThresholdPolicy,
) -> Result<Vec<bool>, FairnessError> {
    check_coverage(scores, partition)?;
    let mut out = alloc::vec![false; scores.len()];
    for (group, members) in partition.groups() {
        let tau = policy.threshold_for(*group)?;
        for &i in members {
            out[i] = scores[i] >= tau;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Group;
    use crate::metrics::auc;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn two_groups(n_a: usize, n_b: usize) -> SubgroupPartition {
        let mut a = vec![Group::Male; n_a];
        a.extend(vec![Group::Female; n_b]);
        SubgroupPartition::from_assignments(ProtectedFeature::Sex, &a)
    }

    /// Exhaustive Youden oracle: tries every observed score.
    fn youden_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let p = labels.iter().filter(|&&y| y).count() as f64;
        let n = labels.len() as f64 - p;
        let mut cands = scores.to_vec();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &t in &cands {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &y)| y && s >= t)
                .count() as f64;
            let fp = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &y)| !y && s >= t)
                .count() as f64;
            let j = tp / p - fp / n;
            if j > best.0 + 1e-12 {
                best = (j, t);
            }
        }
        best.1
    }

    #[test]
    fn youden_on_separable_scores() {
        let s = [0.9, 0.8, 0.7, 0.3, 0.2];
        let y = [true, true, true, false, false];
        let p = choose_naive_threshold(&s, &y, ThresholdRule::Youden).unwrap();
        assert_eq!(p.kind, PolicyKind::Global(0.7));
        let cm = metrics::confusion(&s, &y, 0.7).unwrap();
        assert_eq!((cm.tp, cm.fp), (3, 0));
    }

    #[test]
    fn youden_matches_sweep_on_six_points() {
        let s = [0.81, 0.42, 0.65, 0.30, 0.55, 0.12];
        let y = [true, false, true, true, false, false];
        let p = choose_naive_threshold(&s, &y, ThresholdRule::Youden).unwrap();
        assert_eq!(p.kind, PolicyKind::Global(youden_oracle(&s, &y)));
        assert_eq!(p.kind, PolicyKind::Global(0.65));
    }

    #[test]
    fn fixed_and_target_rules() {
        let s = [0.9, 0.1];
        let y = [true, false];
        assert_eq!(
            choose_naive_threshold(&s, &y, ThresholdRule::Fixed(0.5)).unwrap(),
            ThresholdPolicy::global(0.5)
        );
        let s = [0.9, 0.8, 0.7, 0.6, 0.2];
        let y = [true, true, true, true, false];
        let p = choose_naive_threshold(&s, &y, ThresholdRule::TargetSensitivity(0.75)).unwrap();
        assert_eq!(p.kind, PolicyKind::Global(0.7));
        assert!(matches!(
            choose_naive_threshold(&s, &y, ThresholdRule::TargetSensitivity(1.1)),
            Err(FairnessError::UnachievableTarget(_))
        ));
        assert_eq!(
            choose_naive_threshold(&[0.3], &[false], ThresholdRule::TargetSensitivity(0.5)),
            Err(FairnessError::NoPositives)
        );
    }

    #[test]
    fn threshold_rule_parsing() {
        assert_eq!(
            "youden".parse::<ThresholdRule>().unwrap(),
            ThresholdRule::Youden
        );
        assert_eq!(
            "fixed:0.5".parse::<ThresholdRule>().unwrap(),
            ThresholdRule::Fixed(0.5)
        );
        assert_eq!(
            "sensitivity:0.9".parse::<ThresholdRule>().unwrap(),
            ThresholdRule::TargetSensitivity(0.9)
        );
        assert!("median".parse::<ThresholdRule>().is_err());
    }

    /// 50 positives per group; the first `tp_a` / `tp_b` score above 0.5.
    fn recall_fixture(tp_a: usize, tp_b: usize) -> (Vec<f64>, Vec<bool>, SubgroupPartition) {
        let mut scores = Vec::new();
        for i in 0..50 {
            scores.push(if i < tp_a { 0.9 } else { 0.1 });
        }
        for i in 0..50 {
            scores.push(if i < tp_b { 0.9 } else { 0.1 });
        }
        (scores, vec![true; 100], two_groups(50, 50))
    }

    #[test]
    fn audit_examples() {
        let policy = ThresholdPolicy::global(0.5);
        let (s, y, part) = recall_fixture(30, 30);
        let a = audit(&s, &y, &part, &policy, 0.05).unwrap();
        assert!(!a.biased);
        assert_eq!(a.test.z, 0.0);

        let (s, y, part) = recall_fixture(40, 30);
        let a = audit(&s, &y, &part, &policy, 0.05).unwrap();
        assert!(a.biased);
        assert!((a.test.p_value - 0.029_096).abs() < 1e-5);
        assert_eq!((a.groups[0].recall, a.groups[1].recall), (0.8, 0.6));
        let strict = audit(&s, &y, &part, &policy, 0.005).unwrap();
        assert!(!strict.biased);
    }

    #[test]
    fn audit_refuses_group_without_positives() {
        let s = [0.9, 0.8, 0.7, 0.1];
        let y = [true, true, false, false];
        let part = two_groups(2, 2);
        assert_eq!(
            audit(&s, &y, &part, &ThresholdPolicy::global(0.5), 0.05),
            Err(FairnessError::GroupWithoutPositives(Group::Female))
        );
        let outcome =
            AuditOutcome::from_audit(audit(&s, &y, &part, &ThresholdPolicy::global(0.5), 0.05));
        assert_eq!(
            outcome.unwrap(),
            AuditOutcome::Untestable {
                reason: Untestable::NoPositives {
                    group: Group::Female
                }
            }
        );
    }

    #[test]
    fn calibration_steps_to_next_achievable_sensitivity() {
        let s = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.35, 0.3, 0.25, 0.2];
        let y = [true; 10];
        let part = two_groups(5, 5);
        let p = calibrate_to_target(&s, &y, &part, 0.85, 0.85).unwrap();
        assert_eq!(p.threshold_for(Group::Male).unwrap(), 0.5);
        assert_eq!(p.threshold_for(Group::Female).unwrap(), 0.2);
        let p = calibrate_to_target(&s, &y, &part, 0.8, 0.8).unwrap();
        assert_eq!(p.threshold_for(Group::Male).unwrap(), 0.6);
        assert_eq!(p.threshold_for(Group::Female).unwrap(), 0.25);
    }

    #[test]
    fn full_target_uses_minimum_positive_score() {
        let s = [0.9, 0.2, 0.6, 0.05, 0.4, 0.3];
        let y = [true, true, false, true, true, false];
        let part = two_groups(3, 3);
        let p = calibrate_to_target(&s, &y, &part, 1.0, 0.85).unwrap();
        assert_eq!(p.threshold_for(Group::Male).unwrap(), 0.2);
        assert_eq!(p.threshold_for(Group::Female).unwrap(), 0.05);
    }

    #[test]
    fn single_group_calibration_matches_target_rule() {
        let s = [0.91, 0.77, 0.64, 0.52, 0.33, 0.2, 0.1];
        let y = [true, false, true, true, false, true, false];
        let part = SubgroupPartition::single(Group::Male, s.len());
        let naive = ThresholdPolicy::global(0.5);
        let cal = calibrate_equal_opportunity(&s, &y, &part, &naive, 0.85).unwrap();
        let direct =
            choose_naive_threshold(&s, &y, ThresholdRule::TargetSensitivity(cal.target)).unwrap();
        assert_eq!(
            cal.policy.threshold_for(Group::Male).unwrap(),
            direct.threshold_for(Group::Male).unwrap()
        );
    }

    #[test]
    fn target_is_floor_or_best_group_recall() {
        let (s, y, part) = recall_fixture(48, 20);
        let naive = ThresholdPolicy::global(0.5);
        assert_eq!(
            equal_opportunity_target(&s, &y, &part, &naive, 0.85).unwrap(),
            0.96
        );
        let (s, y, part) = recall_fixture(30, 20);
        assert_eq!(
            equal_opportunity_target(&s, &y, &part, &naive, 0.85).unwrap(),
            0.85
        );
        assert_eq!(
            calibrate_equal_opportunity(&s, &y, &part, &naive, 0.0),
            Err(FairnessError::InvalidFloor(0.0))
        );
    }

    #[test]
    fn apply_policy_examples() {
        let s = [0.6, 0.4, 0.35, 0.2];
        let part = two_groups(2, 2);
        assert_eq!(
            apply_policy(&s, &part, &ThresholdPolicy::global(0.0)).unwrap(),
            vec![true; 4]
        );
        let per_group = ThresholdPolicy {
            feature: Some(ProtectedFeature::Sex),
            kind: PolicyKind::PerGroup(BTreeMap::from([(Group::Male, 0.5), (Group::Female, 0.3)])),
            min_sensitivity: None,
        };
        assert_eq!(
            apply_policy(&s, &part, &per_group).unwrap(),
            vec![true, false, true, false]
        );
        let equal = ThresholdPolicy {
            kind: PolicyKind::PerGroup(BTreeMap::from([
                (Group::Male, 0.38),
                (Group::Female, 0.38),
            ])),
            ..per_group.clone()
        };
        assert_eq!(
            apply_policy(&s, &part, &equal).unwrap(),
            apply_policy(&s, &part, &ThresholdPolicy::global(0.38)).unwrap()
        );
        let partial = ThresholdPolicy {
            kind: PolicyKind::PerGroup(BTreeMap::from([(Group::Male, 0.5)])),
            ..per_group
        };
        assert_eq!(
            apply_policy(&s, &part, &partial),
            Err(FairnessError::MissingGroup(Group::Female))
        );
    }

    fn fixture_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<bool>)> {
        prop::collection::vec((0u16..1000, any::<bool>(), any::<bool>()), 4..120).prop_map(|v| {
            let scores = v.iter().map(|(s, _, _)| f64::from(*s) / 1000.0).collect();
            let labels = v.iter().map(|(_, y, _)| *y).collect();
            let in_a = v.iter().map(|(_, _, g)| *g).collect();
            (scores, labels, in_a)
        })
    }

    fn partition_of(in_a: &[bool]) -> SubgroupPartition {
        let groups: Vec<Group> = in_a
            .iter()
            .map(|&a| if a { Group::Male } else { Group::Female })
            .collect();
        SubgroupPartition::from_assignments(ProtectedFeature::Sex, &groups)
    }

    fn group_sensitivity(s: &[f64], y: &[bool], members: &[usize], tau: f64) -> f64 {
        let pos: Vec<usize> = members.iter().copied().filter(|&i| y[i]).collect();
        pos.iter().filter(|&&i| s[i] >= tau).count() as f64 / pos.len() as f64
    }

    proptest! {
        #[test]
        fn calibrated_groups_meet_target((s, y, in_a) in fixture_strategy(), naive_t in 0.0f64..1.0, floor in 0.05f64..=1.0) {
            let part = partition_of(&in_a);
            let has_pos = part.groups().iter().all(|(_, m)| m.iter().any(|&i| y[i]));
            prop_assume!(has_pos);
            let naive = ThresholdPolicy::global(naive_t);
            let cal = calibrate_equal_opportunity(&s, &y, &part, &naive, floor).unwrap();
            prop_assert!(cal.target >= floor);
            for (g, members) in part.groups() {
                let tau = cal.policy.threshold_for(*g).unwrap();
                let sens = group_sensitivity(&s, &y, members, tau);
                prop_assert!(sens >= cal.target);
                // Largest such threshold: any higher observed positive score misses.
                let higher = members.iter().filter(|&&i| y[i] && s[i] > tau).map(|&i| s[i]).fold(f64::INFINITY, f64::min);
                if higher.is_finite() {
                    prop_assert!(group_sensitivity(&s, &y, members, higher) < cal.target);
                }
            }
            // Thresholds never change AUC: it depends on scores alone.
            if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
                let before = auc(&s, &y).unwrap();
                let _ = apply_policy(&s, &part, &cal.policy).unwrap();
                prop_assert_eq!(before, auc(&s, &y).unwrap());
            }
        }

        #[test]
        fn lowering_a_threshold_never_lowers_sensitivity((s, y, in_a) in fixture_strategy(), t in 0.0f64..1.0, d in 0.0f64..0.5) {
            let part = partition_of(&in_a);
            for (_, members) in part.groups() {
                if members.iter().any(|&i| y[i]) {
                    prop_assert!(group_sensitivity(&s, &y, members, t - d) >= group_sensitivity(&s, &y, members, t));
                }
            }
        }

        #[test]
        fn per_group_policy_restricted_to_one_group_is_global((s, _y, in_a) in fixture_strategy(), ta in 0.0f64..1.0, tb in 0.0f64..1.0) {
            let part = partition_of(&in_a);
            let policy = ThresholdPolicy {
                feature: Some(ProtectedFeature::Sex),
                kind: PolicyKind::PerGroup(BTreeMap::from([(Group::Male, ta), (Group::Female, tb)])),
                min_sensitivity: None,
            };
            let preds = apply_policy(&s, &part, &policy).unwrap();
            for (g, members) in part.groups() {
                let tau = policy.threshold_for(*g).unwrap();
                let sub: Vec<f64> = members.iter().map(|&i| s[i]).collect();
                let single = SubgroupPartition::single(*g, sub.len());
                let global = apply_policy(&sub, &single, &ThresholdPolicy::global(tau)).unwrap();
                let restricted: Vec<bool> = members.iter().map(|&i| preds[i]).collect();
                prop_assert_eq!(restricted, global);
            }
        }

        #[test]
        fn lowered_thresholds_add_false_positives((s, y, in_a) in fixture_strategy(), naive_t in 0.3f64..1.0) {
            let part = partition_of(&in_a);
            let has_pos = part.groups().iter().all(|(_, m)| m.iter().any(|&i| y[i]));
            prop_assume!(has_pos);
            let naive = ThresholdPolicy::global(naive_t);
            let cal = calibrate_equal_opportunity(&s, &y, &part, &naive, 0.85).unwrap();
            for (g, members) in part.groups() {
                let tau = cal.policy.threshold_for(*g).unwrap();
                if tau < naive_t {
                    let fp = |t: f64| members.iter().filter(|&&i| !y[i] && s[i] >= t).count();
                    prop_assert!(fp(tau) >= fp(naive_t));
                }
            }
        }

        #[test]
        fn youden_matches_exhaustive_sweep(v in prop::collection::vec((0u8..30, any::<bool>()), 2..80)) {
            let s: Vec<f64> = v.iter().map(|(x, _)| f64::from(*x) / 30.0).collect();
            let y: Vec<bool> = v.iter().map(|(_, l)| *l).collect();
            prop_assume!(y.iter().any(|&l| l) && y.iter().any(|&l| !l));
            let got = choose_naive_threshold(&s, &y, ThresholdRule::Youden).unwrap();
            // The oracle keeps the first (largest) maximizer; ours the smallest.
            // Compare the achieved J instead.
            let j = |t: f64| {
                let p = y.iter().filter(|&&l| l).count() as f64;
                let n = y.len() as f64 - p;
                let tp = s.iter().zip(&y).filter(|(&x, &l)| l && x >= t).count() as f64;
                let fp = s.iter().zip(&y).filter(|(&x, &l)| !l && x >= t).count() as f64;
                tp / p - fp / n
            };
            let PolicyKind::Global(t) = got.kind else { unreachable!() };
            prop_assert!((j(t) - j(youden_oracle(&s, &y))).abs() < 1e-12);
            prop_assert!(s.contains(&t));
        }
    }
}
