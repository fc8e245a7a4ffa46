//! Bootstrap campaign: resample, split, train, audit, calibrate, re-audit,
//! and tally biased trials before and after calibration.
//!
//! One model is trained per (outcome, trial) and serves the audits of every
//! protected feature; calibration is per feature. Trial seeds come from
//! [`derive_seed`]`([campaign_seed, outcome_index, trial_id])`, so adding
//! outcomes, features or trials never perturbs existing cells.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{
    bootstrap_with_parent, split, subgroup_partition, Cohort, CohortError, CohortSplit, Group,
    Outcome, ProtectedFeature, SplitSpec, SubgroupPartition,
};
use crate::digest::{derive_seed, Fnv64};
use crate::fairness::{
    apply_policy, audit, calibrate_equal_opportunity, choose_naive_threshold, AuditOutcome,
    FairnessError, ThresholdPolicy, ThresholdRule, Untestable,
};
use crate::logit::{train, LogitError, LogitModel, TrainConfig};
use crate::metrics::{auc, bonferroni, ConfusionMatrix, MetricsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrialError {
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Logit(#[from] LogitError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("campaign needs at least one {0}")]
    EmptySelection(&'static str),
    #[error("calibration changed AUC from {pre} to {post}")]
    AucChanged { pre: f64, post: f64 },
    #[error("{outcome} trial {trial_id}: {source}")]
    InTrial {
        outcome: Outcome,
        trial_id: usize,
        source: Box<TrialError>,
    },
}

/// Everything a single trial needs besides the cohort and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Stratify splits on the trial's outcome.
    pub stratify: bool,
    pub train: TrainConfig,
    pub threshold_rule: ThresholdRule,
    pub min_sensitivity: f64,
    pub alpha_effective: f64,
    /// Calibrate even when the validation audit finds no bias.
    pub force_calibration: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            stratify: true,
            train: TrainConfig::default(),
            threshold_rule: ThresholdRule::Youden,
            min_sensitivity: 0.85,
            alpha_effective: 0.05,
            force_calibration: false,
        }
    }
}

impl TrialConfig {
    fn write_digest(&self, h: &mut Fnv64) {
        h.write_f64(self.train_fraction)
            .write_f64(self.val_fraction)
            .write_f64(self.test_fraction)
            .write_bool(self.stratify)
            .write_u64(self.train.digest());
        match self.threshold_rule {
            ThresholdRule::Youden => h.write_u64(0),
            ThresholdRule::Fixed(t) => h.write_u64(1).write_f64(t),
            ThresholdRule::TargetSensitivity(s) => h.write_u64(2).write_f64(s),
        };
        h.write_f64(self.min_sensitivity)
            .write_f64(self.alpha_effective)
            .write_bool(self.force_calibration);
    }

    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        self.write_digest(&mut h);
        h.finish()
    }

    pub fn split_spec(&self, seed: u64, outcome: Outcome) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            val_fraction: self.val_fraction,
            test_fraction: self.test_fraction,
            seed,
            stratify_on: self.stratify.then_some(outcome),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub outcomes: Vec<Outcome>,
    pub features: Vec<ProtectedFeature>,
    pub n_trials: usize,
    pub seed: u64,
    /// Family-wise significance level before Bonferroni adjustment.
    pub alpha: f64,
    /// Number of comparisons; defaults to `outcomes * features`.
    pub bonferroni_m: Option<usize>,
    /// Per-trial settings. `alpha_effective` is replaced by the campaign's
    /// adjusted level.
    pub trial: TrialConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            outcomes: Outcome::ALL.to_vec(),
            features: ProtectedFeature::ALL.to_vec(),
            n_trials: 100,
            seed: 2020,
            alpha: 0.05,
            bonferroni_m: None,
            trial: TrialConfig::default(),
        }
    }
}

/// One (outcome, trial) unit of work; its model serves every feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialUnit {
    pub outcome: Outcome,
    pub trial_id: usize,
    pub seed: u64,
}

fn outcome_index(o: Outcome) -> u64 {
    Outcome::ALL.iter().position(|&x| x == o).unwrap_or(0) as u64
}

impl CampaignConfig {
    pub fn comparisons(&self) -> usize {
        self.bonferroni_m
            .unwrap_or(self.outcomes.len() * self.features.len())
    }

    pub fn alpha_effective(&self) -> Result<f64, TrialError> {
        Ok(bonferroni(self.alpha, self.comparisons())?)
    }

    pub fn validate(&self) -> Result<(), TrialError> {
        if self.outcomes.is_empty() {
            return Err(TrialError::EmptySelection("outcome"));
        }
        if self.features.is_empty() {
            return Err(TrialError::EmptySelection("feature"));
        }
        if self.n_trials == 0 {
            return Err(TrialError::EmptySelection("trial"));
        }
        self.alpha_effective()?;
        self.trial.train.validate()?;
        Ok(())
    }

    /// Trial settings with the adjusted significance level filled in.
    pub fn resolved_trial(&self) -> Result<TrialConfig, TrialError> {
        Ok(TrialConfig {
            alpha_effective: self.alpha_effective()?,
            ..self.trial.clone()
        })
    }

    pub fn units(&self) -> Vec<TrialUnit> {
        let mut units = Vec::with_capacity(self.outcomes.len() * self.n_trials);
        for &outcome in &self.outcomes {
            for trial_id in 0..self.n_trials {
                units.push(TrialUnit {
                    outcome,
                    trial_id,
                    seed: derive_seed(&[self.seed, outcome_index(outcome), trial_id as u64]),
                });
            }
        }
        units
    }

    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write_u64(self.outcomes.len() as u64);
        for o in &self.outcomes {
            h.write_str(o.name());
        }
        h.write_u64(self.features.len() as u64);
        for f in &self.features {
            h.write_str(f.name());
        }
        h.write_u64(self.n_trials as u64)
            .write_u64(self.seed)
            .write_f64(self.alpha)
            .write_u64(self.comparisons() as u64);
        self.trial.write_digest(&mut h);
        h.finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStage {
    pub group: Group,
    pub positives: u64,
    /// `None` when the group has no positives.
    pub recall: Option<f64>,
    /// `None` unless the group holds both classes.
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Performance of one policy on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub auc: f64,
    pub sensitivity: f64,
    pub confusion: ConfusionMatrix,
    pub groups: Vec<GroupStage>,
}

impl StageMetrics {
    pub fn compute(
        scores: &[f64],
        labels: &[bool],
        partition: &SubgroupPartition,
        policy: &ThresholdPolicy,
    ) -> Result<Self, TrialError> {
        let predicted = apply_policy(scores, partition, policy)?;
        let confusion = ConfusionMatrix::from_predictions(&predicted, labels)?;
        let mut groups = Vec::with_capacity(partition.groups().len());
        for (group, members) in partition.groups() {
            let mut cm = ConfusionMatrix::default();
            let mut s = Vec::with_capacity(members.len());
            let mut y = Vec::with_capacity(members.len());
            for &i in members {
                cm.record(predicted[i], labels[i]);
                s.push(scores[i]);
                y.push(labels[i]);
            }
            groups.push(GroupStage {
                group: *group,
                positives: cm.positives(),
                recall: (cm.positives() > 0).then(|| cm.tp as f64 / cm.positives() as f64),
                auc: auc(&s, &y).ok(),
                confusion: cm,
            });
        }
        Ok(Self {
            auc: auc(scores, labels)?,
            sensitivity: crate::metrics::sensitivity(&confusion)?,
            confusion,
            groups,
        })
    }

    /// Absolute recall difference between the first two groups.
    pub fn recall_gap(&self) -> Option<f64> {
        match (self.groups.first()?.recall, self.groups.get(1)?.recall) {
            (Some(a), Some(b)) => Some(libm::fabs(a - b)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub val_pre: StageMetrics,
    pub val_post: Option<StageMetrics>,
    pub test_pre: StageMetrics,
    /// Test performance of the deployed policy: calibrated when calibration
    /// ran, naive otherwise.
    pub test_post: StageMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub policy: ThresholdPolicy,
    pub target: f64,
    pub val_audit_post: AuditOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_id: usize,
    pub outcome: Outcome,
    pub feature: ProtectedFeature,
    pub seed: u64,
    pub naive_policy: Option<ThresholdPolicy>,
    pub val_audit_pre: AuditOutcome,
    pub calibration: Option<CalibrationRecord>,
    pub test_audit_pre: AuditOutcome,
    pub test_audit_post: Option<AuditOutcome>,
    pub metrics: Option<TrialMetrics>,
}

impl TrialOutcome {
    /// Both the validation and the pre-calibration test audit ran.
    pub fn is_testable(&self) -> bool {
        self.val_audit_pre.tested().is_some() && self.test_audit_pre.tested().is_some()
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibration.is_some()
    }

    /// Calibrated, and the validation re-audit no longer flags bias.
    pub fn is_successfully_calibrated(&self) -> bool {
        self.calibration
            .as_ref()
            .is_some_and(|c| c.val_audit_post.tested().is_some_and(|a| !a.biased))
    }

    fn untestable(unit: &TrialUnit, feature: ProtectedFeature, reason: Untestable) -> Self {
        Self {
            trial_id: unit.trial_id,
            outcome: unit.outcome,
            feature,
            seed: unit.seed,
            naive_policy: None,
            val_audit_pre: AuditOutcome::Untestable { reason },
            calibration: None,
            test_audit_pre: AuditOutcome::Untestable { reason },
            test_audit_post: None,
            metrics: None,
        }
    }
}

fn has_both_classes(labels: &[bool]) -> bool {
    labels.iter().any(|&y| y) && labels.iter().any(|&y| !y)
}

/// Runs one (outcome, trial) unit for every feature in `features`.
pub fn run_unit(
    cohort: &Cohort,
    parent_digest: u64,
    unit: &TrialUnit,
    features: &[ProtectedFeature],
    config: &TrialConfig,
) -> Result<Vec<TrialOutcome>, TrialError> {
    run_unit_inner(cohort, parent_digest, unit, features, config).map_err(|e| TrialError::InTrial {
        outcome: unit.outcome,
        trial_id: unit.trial_id,
        source: Box::new(e),
    })
}

fn run_unit_inner(
    cohort: &Cohort,
    parent_digest: u64,
    unit: &TrialUnit,
    features: &[ProtectedFeature],
    config: &TrialConfig,
) -> Result<Vec<TrialOutcome>, TrialError> {
    let resampled = bootstrap_with_parent(cohort, unit.seed, parent_digest)?;
    let parts = split(
        &resampled,
        &config.split_spec(derive_seed(&[unit.seed, 1]), unit.outcome),
    )?;
    let analysis = analyze_split(
        &parts,
        unit.outcome,
        features,
        derive_seed(&[unit.seed, 2]),
        config,
    )?;
    let Some(analysis) = analysis else {
        return Ok(features
            .iter()
            .map(|&f| TrialOutcome::untestable(unit, f, Untestable::SingleClass))
            .collect());
    };
    Ok(analysis
        .features
        .into_iter()
        .map(|f| TrialOutcome {
            trial_id: unit.trial_id,
            outcome: unit.outcome,
            feature: f.feature,
            seed: unit.seed,
            naive_policy: Some(analysis.naive.clone()),
            val_audit_pre: f.val_audit_pre,
            calibration: f.calibration,
            test_audit_pre: f.test_audit_pre,
            test_audit_post: f.test_audit_post,
            metrics: Some(f.metrics),
        })
        .collect())
}

/// Audit and calibration results for one protected feature.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureAnalysis {
    pub feature: ProtectedFeature,
    pub val_audit_pre: AuditOutcome,
    pub calibration: Option<CalibrationRecord>,
    pub test_audit_pre: AuditOutcome,
    pub test_audit_post: Option<AuditOutcome>,
    pub metrics: TrialMetrics,
}

impl FeatureAnalysis {
    /// Policy used on the test split.
    pub fn deployed<'a>(&'a self, naive: &'a ThresholdPolicy) -> &'a ThresholdPolicy {
        self.calibration.as_ref().map_or(naive, |c| &c.policy)
    }
}

/// A model trained on one split together with its per-feature audits.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitAnalysis {
    pub model: LogitModel,
    pub naive: ThresholdPolicy,
    pub val_scores: Vec<f64>,
    pub test_scores: Vec<f64>,
    pub features: Vec<FeatureAnalysis>,
}

/// Trains on `parts.train`, picks the naive threshold on validation, audits,
/// calibrates when biased (or forced) and re-audits on both held-out parts.
/// Returns `None` when any part holds a single class of the outcome.
pub fn analyze_split(
    parts: &CohortSplit,
    outcome: Outcome,
    features: &[ProtectedFeature],
    train_seed: u64,
    config: &TrialConfig,
) -> Result<Option<SplitAnalysis>, TrialError> {
    let val_labels = parts.val.labels(outcome);
    let test_labels = parts.test.labels(outcome);
    if !has_both_classes(&parts.train.labels(outcome))
        || !has_both_classes(&val_labels)
        || !has_both_classes(&test_labels)
    {
        return Ok(None);
    }

    let train_config = TrainConfig {
        seed: train_seed,
        ..config.train.clone()
    };
    let penalty_groups = train_config
        .penalty
        .map(|p| subgroup_partition(&parts.train, p.feature));
    let model = train(
        &parts.train,
        outcome,
        penalty_groups.as_ref(),
        &train_config,
    )?;
    analyze_model(parts, outcome, features, model, config)
}

/// [`analyze_split`] with an already trained model; `parts.train` is unused.
pub fn analyze_model(
    parts: &CohortSplit,
    outcome: Outcome,
    features: &[ProtectedFeature],
    model: LogitModel,
    config: &TrialConfig,
) -> Result<Option<SplitAnalysis>, TrialError> {
    let val_labels = parts.val.labels(outcome);
    let test_labels = parts.test.labels(outcome);
    if !has_both_classes(&val_labels) || !has_both_classes(&test_labels) {
        return Ok(None);
    }
    let val_scores = model.predict_scores(&parts.val)?;
    let test_scores = model.predict_scores(&parts.test)?;
    let naive = choose_naive_threshold(&val_scores, &val_labels, config.threshold_rule)?;
    let alpha = config.alpha_effective;

    let mut out = Vec::with_capacity(features.len());
    for &feature in features {
        let val_part = subgroup_partition(&parts.val, feature);
        let test_part = subgroup_partition(&parts.test, feature);
        let val_audit_pre =
            AuditOutcome::from_audit(audit(&val_scores, &val_labels, &val_part, &naive, alpha))?;
        let test_audit_pre =
            AuditOutcome::from_audit(audit(&test_scores, &test_labels, &test_part, &naive, alpha))?;

        let wants_calibration = val_audit_pre
            .tested()
            .is_some_and(|a| a.biased || config.force_calibration);
        let calibration = if wants_calibration {
            let cal = calibrate_equal_opportunity(
                &val_scores,
                &val_labels,
                &val_part,
                &naive,
                config.min_sensitivity,
            )?;
            let val_audit_post = AuditOutcome::from_audit(audit(
                &val_scores,
                &val_labels,
                &val_part,
                &cal.policy,
                alpha,
            ))?;
            Some(CalibrationRecord {
                policy: cal.policy,
                target: cal.target,
                val_audit_post,
            })
        } else {
            None
        };
        let test_audit_post = match &calibration {
            Some(c) => Some(AuditOutcome::from_audit(audit(
                &test_scores,
                &test_labels,
                &test_part,
                &c.policy,
                alpha,
            ))?),
            None => None,
        };

        let deployed = calibration.as_ref().map_or(&naive, |c| &c.policy);
        let test_pre = StageMetrics::compute(&test_scores, &test_labels, &test_part, &naive)?;
        let test_post = StageMetrics::compute(&test_scores, &test_labels, &test_part, deployed)?;
        if test_pre.auc.to_bits() != test_post.auc.to_bits() {
            return Err(TrialError::AucChanged {
                pre: test_pre.auc,
                post: test_post.auc,
            });
        }
        let metrics = TrialMetrics {
            val_pre: StageMetrics::compute(&val_scores, &val_labels, &val_part, &naive)?,
            val_post: match &calibration {
                Some(c) => Some(StageMetrics::compute(
                    &val_scores,
                    &val_labels,
                    &val_part,
                    &c.policy,
                )?),
                None => None,
            },
            test_pre,
            test_post,
        };
        out.push(FeatureAnalysis {
            feature,
            val_audit_pre,
            calibration,
            test_audit_pre,
            test_audit_post,
            metrics,
        });
    }
    Ok(Some(SplitAnalysis {
        model,
        naive,
        val_scores,
        test_scores,
        features: out,
    }))
}

/// A single trial for one (outcome, feature) cell. Identical to the
/// corresponding entry of a campaign run with the same seed.
pub fn run_trial(
    cohort: &Cohort,
    outcome: Outcome,
    feature: ProtectedFeature,
    trial_id: usize,
    seed: u64,
    config: &TrialConfig,
) -> Result<TrialOutcome, TrialError> {
    let unit = TrialUnit {
        outcome,
        trial_id,
        seed,
    };
    let mut v = run_unit(cohort, cohort.digest(), &unit, &[feature], config)?;
    Ok(v.remove(0))
}

/// `num/den`, rendered `k/N (pct)` with the percentage truncated to an
/// integer, or `k/0 (–)` for an empty denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: usize,
    pub den: usize,
}

impl Ratio {
    pub fn new(num: usize, den: usize) -> Self {
        debug_assert!(num <= den);
        Self { num, den }
    }

    pub fn percent(&self) -> Option<usize> {
        (self.den > 0).then(|| self.num * 100 / self.den)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.percent() {
            Some(p) => write!(f, "{}/{} ({})", self.num, self.den, p),
            None => write!(f, "{}/{} (\u{2013})", self.num, self.den),
        }
    }
}

/// Means over testable trials, measured on the test split. `post` uses the
/// deployed policy of each trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trials: usize,
    pub mean_auc_pre: Option<f64>,
    pub mean_auc_post: Option<f64>,
    pub mean_sensitivity_pre: Option<f64>,
    pub mean_sensitivity_post: Option<f64>,
    pub mean_recall_gap_pre: Option<f64>,
    pub mean_recall_gap_post: Option<f64>,
}

#[derive(Default)]
struct AggregateFold {
    n: usize,
    sums: [f64; 6],
    gap_n: usize,
}

impl AggregateFold {
    fn add(&mut self, t: &TrialOutcome) {
        let Some(m) = t.metrics.as_ref().filter(|_| t.is_testable()) else {
            return;
        };
        self.n += 1;
        self.sums[0] += m.test_pre.auc;
        self.sums[1] += m.test_post.auc;
        self.sums[2] += m.test_pre.sensitivity;
        self.sums[3] += m.test_post.sensitivity;
        if let (Some(a), Some(b)) = (m.test_pre.recall_gap(), m.test_post.recall_gap()) {
            self.gap_n += 1;
            self.sums[4] += a;
            self.sums[5] += b;
        }
    }

    fn finish(&self) -> Aggregates {
        let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
        Aggregates {
            trials: self.n,
            mean_auc_pre: mean(self.sums[0], self.n),
            mean_auc_post: mean(self.sums[1], self.n),
            mean_sensitivity_pre: mean(self.sums[2], self.n),
            mean_sensitivity_post: mean(self.sums[3], self.n),
            mean_recall_gap_pre: mean(self.sums[4], self.gap_n),
            mean_recall_gap_post: mean(self.sums[5], self.gap_n),
        }
    }
}

/// One (outcome, feature) row of the campaign table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub outcome: Outcome,
    pub feature: ProtectedFeature,
    pub trials: usize,
    pub untestable: usize,
    /// Biased on validation, out of testable trials.
    pub biased_val: Ratio,
    /// Validation re-audit unbiased, out of calibrated trials.
    pub successfully_calibrated: Ratio,
    /// Test audit biased at the naive policy, out of successfully
    /// calibrated trials.
    pub precal_biased_test: Ratio,
    /// Test audit biased at the calibrated policy, same denominator.
    pub postcal_biased_test: Ratio,
    pub aggregates: Aggregates,
}

fn sorted(outcomes: &[TrialOutcome]) -> Vec<&TrialOutcome> {
    let mut v: Vec<&TrialOutcome> = outcomes.iter().collect();
    v.sort_by_key(|t| (t.outcome, t.feature, t.trial_id));
    v
}

/// Table rows in (outcome, feature) order. Input order does not matter.
pub fn summarize(outcomes: &[TrialOutcome]) -> Vec<CellReport> {
    let trials = sorted(outcomes);
    let mut rows = Vec::new();
    let mut start = 0;
    while start < trials.len() {
        let key = (trials[start].outcome, trials[start].feature);
        let mut end = start;
        while end < trials.len() && (trials[end].outcome, trials[end].feature) == key {
            end += 1;
        }
        rows.push(summarize_cell(&trials[start..end]));
        start = end;
    }
    rows
}

fn summarize_cell(cell: &[&TrialOutcome]) -> CellReport {
    let testable: Vec<&&TrialOutcome> = cell.iter().filter(|t| t.is_testable()).collect();
    let biased = testable
        .iter()
        .filter(|t| t.val_audit_pre.is_biased())
        .count();
    let calibrated = testable.iter().filter(|t| t.is_calibrated()).count();
    let successful: Vec<&&&TrialOutcome> = testable
        .iter()
        .filter(|t| t.is_successfully_calibrated())
        .collect();
    let pre = successful
        .iter()
        .filter(|t| t.test_audit_pre.is_biased())
        .count();
    let post = successful
        .iter()
        .filter(|t| {
            t.test_audit_post
                .as_ref()
                .is_some_and(AuditOutcome::is_biased)
        })
        .count();
    let mut fold = AggregateFold::default();
    cell.iter().for_each(|t| fold.add(t));
    CellReport {
        outcome: cell[0].outcome,
        feature: cell[0].feature,
        trials: cell.len(),
        untestable: cell.len() - testable.len(),
        biased_val: Ratio::new(biased, testable.len()),
        successfully_calibrated: Ratio::new(successful.len(), calibrated),
        precal_biased_test: Ratio::new(pre, successful.len()),
        postcal_biased_test: Ratio::new(post, successful.len()),
        aggregates: fold.finish(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config_digest: u64,
    pub cohort_digest: u64,
    pub campaign_seed: u64,
    pub n_trials: usize,
    pub alpha: f64,
    pub bonferroni_m: usize,
    pub alpha_effective: f64,
    pub rows: Vec<CellReport>,
    pub overall: Aggregates,
    pub total_precal_biased_test: usize,
    pub total_postcal_biased_test: usize,
}

impl CampaignReport {
    pub fn assemble(
        config: &CampaignConfig,
        cohort_digest: u64,
        outcomes: &[TrialOutcome],
    ) -> Result<Self, TrialError> {
        let rows = summarize(outcomes);
        let mut fold = AggregateFold::default();
        sorted(outcomes).into_iter().for_each(|t| fold.add(t));
        Ok(Self {
            config_digest: config.digest(),
            cohort_digest,
            campaign_seed: config.seed,
            n_trials: config.n_trials,
            alpha: config.alpha,
            bonferroni_m: config.comparisons(),
            alpha_effective: config.alpha_effective()?,
            total_precal_biased_test: rows.iter().map(|r| r.precal_biased_test.num).sum(),
            total_postcal_biased_test: rows.iter().map(|r| r.postcal_biased_test.num).sum(),
            rows,
            overall: fold.finish(),
        })
    }
}

/// A finished campaign: the table and the per-trial log it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignRun {
    pub report: CampaignReport,
    pub trials: Vec<TrialOutcome>,
}

/// Orders trials canonically: (outcome, feature, trial id).
pub fn canonical_order(trials: &mut [TrialOutcome]) {
    trials.sort_by_key(|t| (t.outcome, t.feature, t.trial_id));
}

/// Sequential campaign. `fairscreen` provides a parallel runner producing
/// the same result.
pub fn run_campaign(cohort: &Cohort, config: &CampaignConfig) -> Result<CampaignRun, TrialError> {
    config.validate()?;
    let trial = config.resolved_trial()?;
    let digest = cohort.digest();
    let mut trials =
        Vec::with_capacity(config.n_trials * config.outcomes.len() * config.features.len());
    for unit in config.units() {
        trials.extend(run_unit(cohort, digest, &unit, &config.features, &trial)?);
    }
    canonical_order(&mut trials);
    let report = CampaignReport::assemble(config, digest, &trials)?;
    Ok(CampaignRun { report, trials })
}
