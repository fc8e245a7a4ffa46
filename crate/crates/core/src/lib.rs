//! Subgroup bias auditing for binary screening classifiers.
//!
//! The crate covers the whole pipeline without touching the filesystem:
//! cohort modelling and synthetic generation, logistic-regression training
//! (plain and sensitivity-gap penalized), classification metrics with the
//! two-proportion test machinery, equal-opportunity threshold calibration,
//! and the bootstrap campaign that counts biased deployments before and
//! after calibration.
//!
//! IO, configuration files and the command line live in the `fairscreen`
//! crate.

#![no_std]

extern crate alloc;

pub mod cohort;
pub mod digest;
pub mod fairness;
pub mod logit;
pub mod metrics;
pub mod trials;

pub use cohort::{
    bootstrap_resample, generate_synthetic, split, subgroup_partition, Cohort, CohortError,
    CohortRecord, CohortSplit, Group, Labels, Outcome, ProtectedFeature, Provenance, RaceGroup,
    Sex, SplitSpec, SubgroupPartition, SynthConfig,
};
pub use fairness::{
    apply_policy, audit, calibrate_equal_opportunity, choose_naive_threshold, AuditOutcome,
    BiasAudit, FairnessError, PolicyKind, ThresholdPolicy, ThresholdRule,
};
pub use logit::{sigmoid, train, FairnessPenalty, LogitError, LogitModel, TrainConfig};
pub use metrics::{
    auc, bonferroni, confusion, recall_diff_ci, sensitivity, two_proportion_ztest, ConfusionMatrix,
    Interval, MetricsError, ProportionTest,
};
pub use trials::{
    analyze_model, analyze_split, run_campaign, run_trial, run_unit, summarize, CampaignConfig,
    CampaignReport, CampaignRun, Ratio, SplitAnalysis, TrialConfig, TrialError, TrialOutcome,
    TrialUnit,
};
