//! Decision-distribution figure: per-group score histograms with the naive
//! and calibrated thresholds, plus per-group confusion proportions under
//! both policies.

use std::fmt::Write as _;

use fairscreen_core::cohort::SubgroupPartition;
use fairscreen_core::{apply_policy, ConfusionMatrix, FairnessError, Group, ThresholdPolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum FigureError {
    #[error("no scores to plot")]
    Empty,
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("{0} labels for {1} scores")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionProportions {
    pub counts: ConfusionMatrix,
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
}

impl ConfusionProportions {
    fn new(counts: ConfusionMatrix) -> Self {
        let n = counts.total().max(1) as f64;
        Self {
            counts,
            tp: counts.tp as f64 / n,
            fp: counts.fp as f64 / n,
            tn: counts.tn as f64 / n,
            fn_: counts.fn_ as f64 / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupHistogram {
    pub group: Group,
    pub records: usize,
    /// Counts per bin of records with a positive label.
    pub positive_counts: Vec<u64>,
    pub negative_counts: Vec<u64>,
    pub naive_threshold: f64,
    pub calibrated_threshold: Option<f64>,
    pub confusion_pre: ConfusionProportions,
    pub confusion_post: Option<ConfusionProportions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionDistribution {
    pub bins: usize,
    /// Bin `i` covers `[i / bins, (i + 1) / bins)`; the last bin includes 1.
    pub groups: Vec<GroupHistogram>,
    pub notes: Vec<String>,
}

fn bin_of(score: f64, bins: usize) -> usize {
    ((score * bins as f64) as usize).min(bins - 1)
}

pub fn decision_distribution(
    scores: &[f64],
    labels: &[bool],
    partition: &SubgroupPartition,
    naive: &ThresholdPolicy,
    calibrated: Option<&ThresholdPolicy>,
    bins: usize,
) -> Result<DecisionDistribution, FigureError> {
    if scores.is_empty() {
        return Err(FigureError::Empty);
    }
    if bins == 0 {
        return Err(FigureError::NoBins);
    }
    if labels.len() != scores.len() {
        return Err(FigureError::LengthMismatch(labels.len(), scores.len()));
    }
    if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(FigureError::ScoreOutOfRange(s));
    }
    let pre = apply_policy(scores, partition, naive)?;
    let post = calibrated
        .map(|p| apply_policy(scores, partition, p))
        .transpose()?;
    let mut groups = Vec::new();
    let mut notes = Vec::new();
    for (group, members) in partition.groups() {
        if members.is_empty() {
            notes.push(format!("group `{group}` has no records and is omitted"));
            continue;
        }
        let mut positive_counts = vec![0u64; bins];
        let mut negative_counts = vec![0u64; bins];
        let mut cm_pre = ConfusionMatrix::default();
        let mut cm_post = ConfusionMatrix::default();
        for &i in members {
            let b = bin_of(scores[i], bins);
            if labels[i] {
                positive_counts[b] += 1;
            } else {
                negative_counts[b] += 1;
            }
            cm_pre.record(pre[i], labels[i]);
            if let Some(p) = &post {
                cm_post.record(p[i], labels[i]);
            }
        }
        groups.push(GroupHistogram {
            group: *group,
            records: members.len(),
            positive_counts,
            negative_counts,
            naive_threshold: naive.threshold_for(*group)?,
            calibrated_threshold: calibrated.map(|p| p.threshold_for(*group)).transpose()?,
            confusion_pre: ConfusionProportions::new(cm_pre),
            confusion_post: post.as_ref().map(|_| ConfusionProportions::new(cm_post)),
        });
    }
    Ok(DecisionDistribution {
        bins,
        groups,
        notes,
    })
}

/// Long-form table: one line per (group, bin).
pub fn render_csv(d: &DecisionDistribution) -> String {
    let mut out =
        String::from("group,bin,lo,hi,positives,negatives,naive_threshold,calibrated_threshold\n");
    for g in &d.groups {
        for b in 0..d.bins {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                g.group,
                b,
                b as f64 / d.bins as f64,
                (b + 1) as f64 / d.bins as f64,
                g.positive_counts[b],
                g.negative_counts[b],
                g.naive_threshold,
                g.calibrated_threshold
                    .map_or(String::new(), |t| t.to_string())
            );
        }
    }
    out
}

/// Static SVG with one panel per group. Positive-label counts are drawn
/// above the axis and negative-label counts below it; the naive threshold
/// is dotted blue, the calibrated one solid red.
pub fn render_svg(d: &DecisionDistribution, title: &str) -> String {
    const W: f64 = 640.0;
    const PANEL_H: f64 = 220.0;
    const M: f64 = 40.0;
    let h = M + PANEL_H * d.groups.len().max(1) as f64 + M;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{h}" viewBox="0 0 {W} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{M}" y="20" font-size="14">{}</text>"#,
        escape(title)
    );
    let plot_w = W - 2.0 * M;
    let bar_w = plot_w / d.bins as f64;
    for (k, g) in d.groups.iter().enumerate() {
        let top = M + PANEL_H * k as f64;
        let axis = top + PANEL_H / 2.0;
        let half = PANEL_H / 2.0 - 24.0;
        let max_pos = g.positive_counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let max_neg = g.negative_counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{M}" y="{:.1}">{} (n={}; positives above axis, max {}; negatives below, max {})</text>"#,
            top + 12.0,
            g.group,
            g.records,
            max_pos,
            max_neg
        );
        for b in 0..d.bins {
            let x = M + bar_w * b as f64;
            let hp = half * g.positive_counts[b] as f64 / max_pos;
            let hn = half * g.negative_counts[b] as f64 / max_neg;
            if hp > 0.0 {
                let _ = writeln!(
                    s,
                    r##"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{hp:.2}" fill="#4c72b0"/>"##,
                    axis - hp,
                    bar_w * 0.9
                );
            }
            if hn > 0.0 {
                let _ = writeln!(
                    s,
                    r##"<rect x="{x:.2}" y="{axis:.2}" width="{:.2}" height="{hn:.2}" fill="#999999"/>"##,
                    bar_w * 0.9
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<line x1="{M}" y1="{axis:.2}" x2="{:.2}" y2="{axis:.2}" stroke="black"/>"#,
            M + plot_w
        );
        let line = |t: f64, style: &str| {
            let x = M + plot_w * t;
            format!(
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" {style}/>"#,
                axis - half,
                axis + half
            )
        };
        let _ = writeln!(
            s,
            "{}",
            line(
                g.naive_threshold,
                r##"stroke="#1f5fbf" stroke-width="2" stroke-dasharray="3,3""##
            )
        );
        if let Some(t) = g.calibrated_threshold {
            let _ = writeln!(s, "{}", line(t, r##"stroke="#d62728" stroke-width="2""##));
        }
        let mut legend = format!("naive {:.4}", g.naive_threshold);
        if let Some(t) = g.calibrated_threshold {
            let _ = write!(legend, ", calibrated {t:.4}");
        }
        let _ = writeln!(
            s,
            r#"<text x="{M}" y="{:.1}">{legend}</text>"#,
            axis + half + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
