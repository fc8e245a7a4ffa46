//! Renderers for campaign reports and single-analysis audits.
//!
//! Renderers only format values already present in the report structures;
//! every count can be re-derived from the per-trial log.

use std::fmt::Write as _;

use fairscreen_core::fairness::PolicyKind;
use fairscreen_core::trials::{Aggregates, CellReport, SplitAnalysis, StageMetrics};
use fairscreen_core::{
    AuditOutcome, CampaignConfig, CampaignReport, Outcome, ProtectedFeature, Ratio,
    ThresholdPolicy, TrialOutcome,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Table => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub const REPORT_FORMAT: &str = "fairscreen-campaign/1";

pub fn hex(d: u64) -> String {
    format!("{d:016x}")
}

/// The machine-readable campaign document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format: String,
    pub config_digest: String,
    pub cohort_digest: String,
    pub campaign_seed: u64,
    pub n_trials: usize,
    pub alpha: f64,
    pub bonferroni_m: usize,
    pub alpha_effective: f64,
    pub config: CampaignConfig,
    pub rows: Vec<CellReport>,
    pub overall: Aggregates,
    pub total_precal_biased_test: usize,
    pub total_postcal_biased_test: usize,
}

impl ReportDocument {
    pub fn new(report: &CampaignReport, config: &CampaignConfig) -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            config_digest: hex(report.config_digest),
            cohort_digest: hex(report.cohort_digest),
            campaign_seed: report.campaign_seed,
            n_trials: report.n_trials,
            alpha: report.alpha,
            bonferroni_m: report.bonferroni_m,
            alpha_effective: report.alpha_effective,
            config: config.clone(),
            rows: report.rows.clone(),
            overall: report.overall,
            total_precal_biased_test: report.total_precal_biased_test,
            total_postcal_biased_test: report.total_postcal_biased_test,
        }
    }
}

fn header_line(r: &CampaignReport) -> String {
    format!(
        "# config_digest={} cohort_digest={} campaign_seed={} n_trials={} alpha={} bonferroni_m={} alpha_effective={}",
        hex(r.config_digest),
        hex(r.cohort_digest),
        r.campaign_seed,
        r.n_trials,
        r.alpha,
        r.bonferroni_m,
        r.alpha_effective
    )
}

fn title(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f
            .to_uppercase()
            .chain(c)
            .collect::<String>()
            .replace('_', " "),
        None => String::new(),
    }
}

pub const TABLE_COLUMNS: [&str; 6] = [
    "Outcome",
    "Protected Feature",
    "Biased Trials (%)",
    "Successfully Calibrated Trials (%)",
    "Pre-Calibration Biased Test Trials (%)",
    "Post-Calibration Biased Test Trials (%)",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

pub fn aggregate_line(a: &Aggregates) -> String {
    format!(
        "aggregate: mean_auc_pre={} mean_auc_post={} mean_sensitivity_pre={} mean_sensitivity_post={} mean_recall_gap_pre={} mean_recall_gap_post={} testable_trials={}",
        opt(a.mean_auc_pre),
        opt(a.mean_auc_post),
        opt(a.mean_sensitivity_pre),
        opt(a.mean_sensitivity_post),
        opt(a.mean_recall_gap_pre),
        opt(a.mean_recall_gap_post),
        a.trials
    )
}

/// Plain-text grid, one row per (outcome, feature) cell.
pub fn render_table(r: &CampaignReport) -> String {
    let mut cells: Vec<[String; 6]> = vec![TABLE_COLUMNS.map(String::from)];
    for row in &r.rows {
        cells.push([
            title(row.outcome.name()),
            title(row.feature.name()),
            row.biased_val.to_string(),
            row.successfully_calibrated.to_string(),
            row.precal_biased_test.to_string(),
            row.postcal_biased_test.to_string(),
        ]);
    }
    let mut widths = [0usize; 6];
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let mut out = String::new();
    out.push_str(&header_line(r));
    out.push('\n');
    for (i, c) in cells.iter().enumerate() {
        let line: Vec<String> = c
            .iter()
            .zip(widths)
            .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("-|-"));
            out.push('\n');
        }
    }
    out.push('\n');
    out.push_str(&aggregate_line(&r.overall));
    out.push('\n');
    let _ = writeln!(
        out,
        "totals: precal_biased_test={} postcal_biased_test={}",
        r.total_precal_biased_test, r.total_postcal_biased_test
    );
    let untestable: usize = r.rows.iter().map(|c| c.untestable).sum();
    let _ = writeln!(out, "untestable trials: {untestable}");
    out
}

pub const CSV_COLUMNS: [&str; 23] = [
    "config_digest",
    "cohort_digest",
    "campaign_seed",
    "alpha_effective",
    "outcome",
    "feature",
    "trials",
    "untestable",
    "biased_val_k",
    "biased_val_n",
    "successfully_calibrated_k",
    "successfully_calibrated_n",
    "precal_biased_test_k",
    "precal_biased_test_n",
    "postcal_biased_test_k",
    "postcal_biased_test_n",
    "testable_trials",
    "mean_auc_pre",
    "mean_auc_post",
    "mean_sensitivity_pre",
    "mean_sensitivity_post",
    "mean_recall_gap_pre",
    "mean_recall_gap_post",
];

fn csv_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// One row per cell; floats in shortest round-trip form, missing values empty.
pub fn render_csv(r: &CampaignReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    let ratio = |x: &Ratio| [x.num.to_string(), x.den.to_string()];
    for row in &r.rows {
        let a = &row.aggregates;
        let mut rec = vec![
            hex(r.config_digest),
            hex(r.cohort_digest),
            r.campaign_seed.to_string(),
            r.alpha_effective.to_string(),
            row.outcome.name().to_string(),
            row.feature.name().to_string(),
            row.trials.to_string(),
            row.untestable.to_string(),
        ];
        rec.extend(ratio(&row.biased_val));
        rec.extend(ratio(&row.successfully_calibrated));
        rec.extend(ratio(&row.precal_biased_test));
        rec.extend(ratio(&row.postcal_biased_test));
        rec.push(a.trials.to_string());
        for v in [
            a.mean_auc_pre,
            a.mean_auc_post,
            a.mean_sensitivity_pre,
            a.mean_sensitivity_post,
            a.mean_recall_gap_pre,
            a.mean_recall_gap_post,
        ] {
            rec.push(csv_opt(v));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn render_json(r: &CampaignReport, config: &CampaignConfig) -> String {
    let mut s =
        serde_json::to_string_pretty(&ReportDocument::new(r, config)).expect("report serializes");
    s.push('\n');
    s
}

/// One JSON object per trial, in canonical order.
pub fn render_trial_log(trials: &[TrialOutcome]) -> String {
    let mut out = String::new();
    for t in trials {
        out.push_str(&serde_json::to_string(t).expect("trial serializes"));
        out.push('\n');
    }
    out
}

pub fn render_campaign(r: &CampaignReport, config: &CampaignConfig, format: Format) -> String {
    match format {
        Format::Table => render_table(r),
        Format::Csv => render_csv(r),
        Format::Json => render_json(r, config),
    }
}

/// Per-(stage, group) row of an audit block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub stage: String,
    pub group: String,
    pub threshold: f64,
    pub auc: f64,
    pub group_auc: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: u64,
    pub positives: u64,
    pub p_value: Option<f64>,
    pub abs_recall_diff: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub biased: Option<bool>,
}

/// A single outcome/feature analysis: validation and test, before and after
/// calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub outcome: Outcome,
    pub feature: ProtectedFeature,
    pub alpha_effective: f64,
    pub naive: Option<ThresholdPolicy>,
    pub calibrated: Option<ThresholdPolicy>,
    pub target: Option<f64>,
    pub status: AuditStatus,
    pub rows: Vec<AuditRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    /// Validation recalls did not differ significantly.
    Unbiased,
    /// Biased, and the calibrated validation re-audit no longer rejects.
    Calibrated,
    /// Biased, and calibration did not remove the significant difference.
    BiasedUncalibrated,
    /// Some split lacked a class or a group had no positives.
    Untestable,
}

fn stage_rows(
    stage: &str,
    metrics: &StageMetrics,
    audit: &AuditOutcome,
    policy: &ThresholdPolicy,
) -> Vec<AuditRow> {
    let tested = audit.tested();
    // Oriented so the point estimate is non-negative.
    let (abs, lo, hi) = match tested {
        Some(a) => {
            let d = a.groups[0].recall - a.groups[1].recall;
            if d >= 0.0 {
                (Some(d), Some(a.ci.lo), Some(a.ci.hi))
            } else {
                (Some(-d), Some(-a.ci.hi), Some(-a.ci.lo))
            }
        }
        None => (None, None, None),
    };
    metrics
        .groups
        .iter()
        .map(|g| AuditRow {
            stage: stage.to_string(),
            group: g.group.name().to_string(),
            threshold: policy.threshold_for(g.group).unwrap_or(f64::NAN),
            auc: metrics.auc,
            group_auc: g.auc,
            recall: g.recall,
            true_positives: g.confusion.tp,
            positives: g.positives,
            p_value: tested.map(|a| a.test.p_value),
            abs_recall_diff: abs,
            ci_lo: lo,
            ci_hi: hi,
            biased: tested.map(|a| a.biased),
        })
        .collect()
}

impl AuditReport {
    pub fn untestable(outcome: Outcome, feature: ProtectedFeature, alpha_effective: f64) -> Self {
        Self {
            outcome,
            feature,
            alpha_effective,
            naive: None,
            calibrated: None,
            target: None,
            status: AuditStatus::Untestable,
            rows: Vec::new(),
        }
    }

    /// Collects the audit of `feature_index` from a finished analysis.
    pub fn from_analysis(
        analysis: &SplitAnalysis,
        outcome: Outcome,
        feature_index: usize,
        alpha_effective: f64,
    ) -> Self {
        let f = &analysis.features[feature_index];
        let naive = &analysis.naive;
        let status = if f.val_audit_pre.tested().is_none() || f.test_audit_pre.tested().is_none() {
            AuditStatus::Untestable
        } else if !f.val_audit_pre.is_biased() {
            AuditStatus::Unbiased
        } else {
            match &f.calibration {
                Some(c) if !c.val_audit_post.is_biased() && c.val_audit_post.tested().is_some() => {
                    AuditStatus::Calibrated
                }
                _ => AuditStatus::BiasedUncalibrated,
            }
        };
        let mut rows = stage_rows(
            "validation pre",
            &f.metrics.val_pre,
            &f.val_audit_pre,
            naive,
        );
        if let (Some(c), Some(m)) = (&f.calibration, &f.metrics.val_post) {
            rows.extend(stage_rows(
                "validation post",
                m,
                &c.val_audit_post,
                &c.policy,
            ));
        }
        rows.extend(stage_rows(
            "test pre",
            &f.metrics.test_pre,
            &f.test_audit_pre,
            naive,
        ));
        if let (Some(c), Some(a)) = (&f.calibration, &f.test_audit_post) {
            rows.extend(stage_rows("test post", &f.metrics.test_post, a, &c.policy));
        }
        Self {
            outcome,
            feature: f.feature,
            alpha_effective,
            naive: Some(naive.clone()),
            calibrated: f.calibration.as_ref().map(|c| c.policy.clone()),
            target: f.calibration.as_ref().map(|c| c.target),
            status,
            rows,
        }
    }
}

pub const AUDIT_COLUMNS: [&str; 10] = [
    "stage",
    "group",
    "threshold",
    "auc",
    "recall",
    "tp/positives",
    "p_value",
    "abs_recall_diff (95% CI)",
    "biased",
    "group_auc",
];

fn policy_summary(p: &ThresholdPolicy) -> String {
    match &p.kind {
        PolicyKind::Global(t) => format!("global {t:.6}"),
        PolicyKind::PerGroup(m) => m
            .iter()
            .map(|(g, t)| format!("{g}={t:.6}"))
            .collect::<Vec<_>>()
            .join(" "),
    }
}

pub fn render_audit_table(a: &AuditReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# audit outcome={} feature={} alpha_effective={}",
        a.outcome, a.feature, a.alpha_effective
    );
    let Some(naive) = a
        .naive
        .as_ref()
        .filter(|_| a.status != AuditStatus::Untestable)
    else {
        out.push_str("untestable: a split lacks a class or a group has no positives\n");
        let _ = writeln!(out, "status: {}", status_name(a.status));
        return out;
    };
    let _ = writeln!(out, "naive threshold: {}", policy_summary(naive));
    let fmt_p = |p: Option<f64>| p.map_or_else(|| "-".into(), |v| format!("{v:.4e}"));
    let mut cells: Vec<Vec<String>> = vec![AUDIT_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for r in &a.rows {
        cells.push(vec![
            r.stage.clone(),
            r.group.clone(),
            format!("{:.6}", r.threshold),
            format!("{:.4}", r.auc),
            opt(r.recall),
            format!("{}/{}", r.true_positives, r.positives),
            fmt_p(r.p_value),
            match (r.abs_recall_diff, r.ci_lo, r.ci_hi) {
                (Some(d), Some(lo), Some(hi)) => format!("{d:.4} ({lo:.4}, {hi:.4})"),
                _ => "-".into(),
            },
            r.biased
                .map_or("-".into(), |b| if b { "yes" } else { "no" }.to_string()),
            opt(r.group_auc),
        ]);
    }
    let mut widths = vec![0usize; AUDIT_COLUMNS.len()];
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    for c in &cells {
        let line: Vec<String> = c
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    match (&a.calibrated, a.status) {
        (None, _) => {
            out.push_str("not calibrated: recalls did not differ significantly on validation\n")
        }
        (Some(p), status) => {
            let _ = writeln!(
                out,
                "calibrated thresholds: {} (target sensitivity {:.4})",
                policy_summary(p),
                a.target.unwrap_or(f64::NAN)
            );
            if status == AuditStatus::BiasedUncalibrated {
                out.push_str(
                    "calibration did not remove the significant difference on validation\n",
                );
            }
        }
    }
    let _ = writeln!(out, "status: {}", status_name(a.status));
    out
}

pub fn status_name(s: AuditStatus) -> &'static str {
    match s {
        AuditStatus::Unbiased => "unbiased",
        AuditStatus::Calibrated => "calibrated",
        AuditStatus::BiasedUncalibrated => "biased_uncalibrated",
        AuditStatus::Untestable => "untestable",
    }
}

pub fn render_audit_csv(a: &AuditReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "outcome",
        "feature",
        "status",
        "stage",
        "group",
        "threshold",
        "auc",
        "group_auc",
        "recall",
        "true_positives",
        "positives",
        "p_value",
        "abs_recall_diff",
        "ci_lo",
        "ci_hi",
        "biased",
    ])
    .expect("in-memory write");
    for r in &a.rows {
        w.write_record([
            a.outcome.name().to_string(),
            a.feature.name().to_string(),
            status_name(a.status).to_string(),
            r.stage.clone(),
            r.group.clone(),
            r.threshold.to_string(),
            r.auc.to_string(),
            csv_opt(r.group_auc),
            csv_opt(r.recall),
            r.true_positives.to_string(),
            r.positives.to_string(),
            csv_opt(r.p_value),
            csv_opt(r.abs_recall_diff),
            csv_opt(r.ci_lo),
            csv_opt(r.ci_hi),
            r.biased.map_or(String::new(), |b| b.to_string()),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn render_audit(a: &AuditReport, format: Format) -> String {
    match format {
        Format::Table => render_audit_table(a),
        Format::Csv => render_audit_csv(a),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(a).expect("audit serializes");
            s.push('\n');
            s
        }
    }
}
