//! Command-line interface.
//!
//! Exit statuses:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success; for `audit`, unbiased or successfully calibrated |
//! | 1 | internal error |
//! | 2 | usage error (bad flags or arguments) |
//! | 3 | `audit`: biased and calibration did not remove the difference |
//! | 4 | `audit`/`calibrate`: untestable (single class or a group without positives) |
//! | 5 | invalid configuration or input data |
//! | 6 | I/O error (unreadable input, unwritable output) |

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fairscreen_core::digest::derive_seed;
use fairscreen_core::trials::{analyze_model, analyze_split, SplitAnalysis};
use fairscreen_core::{
    bonferroni, generate_synthetic, split, subgroup_partition, CampaignConfig, Cohort, Group,
    Outcome, ProtectedFeature, SynthConfig, ThresholdRule, TrialConfig,
};
use thiserror::Error;

use crate::config::{load_synth_config, CampaignFile, ConfigError};
use crate::documents::{
    load_model, load_policy, save_model, save_policy, ModelDocument, PolicyDocument,
};
use crate::figure::{decision_distribution, render_svg, DEFAULT_BINS};
use crate::io::{load_csv, save_csv};
use crate::report::{self, render_audit, AuditReport, AuditStatus, Format};
use crate::runner::run_campaign_parallel;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_BIASED: u8 = 3;
pub const EXIT_UNTESTABLE: u8 = 4;
pub const EXIT_CONFIG: u8 = 5;
pub const EXIT_IO: u8 = 6;

#[derive(Debug, Parser)]
#[command(
    name = "fairscreen",
    version,
    about = "Subgroup bias audits and equal-opportunity threshold calibration"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for generation, splitting and training; overrides config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output formats, comma separated.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
    /// Campaign worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Family-wise significance level before Bonferroni adjustment [default: 0.05].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Per-group sensitivity floor for calibration [default: 0.85].
    #[arg(long, global = true)]
    pub min_sensitivity: Option<f64>,
    /// Naive threshold rule: youden, fixed:<t> or sensitivity:<s> [default: youden].
    #[arg(long, global = true)]
    pub threshold_rule: Option<ThresholdRule>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort CSV and print its realized marginals.
    Generate {
        /// Synthetic config (TOML); the built-in default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cohort CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and audit one protected feature, calibrating if biased.
    Audit(AnalysisArgs),
    /// Train one model and write a calibrated threshold policy.
    Calibrate {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Policy output (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a bootstrap campaign and write its reports.
    Campaign {
        /// Campaign config (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of trials per cell; overrides the config.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Emit decision-distribution data and a static SVG.
    Render {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Histogram bins over [0, 1].
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Calibrated policy to draw instead of calibrating on validation.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    /// Cohort CSV.
    #[arg(long)]
    pub cohort: PathBuf,
    /// mortality, ventilator or inpatient.
    #[arg(long)]
    pub outcome: Outcome,
    /// Protected feature: sex, race or senior.
    #[arg(long)]
    pub feature: ProtectedFeature,
    /// Calibrate even when the validation audit finds no bias.
    #[arg(long)]
    pub force: bool,
    /// Number of comparisons for the Bonferroni adjustment.
    #[arg(long, default_value_t = 1)]
    pub bonferroni_m: usize,
    /// Use a saved model instead of training.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Save the trained model (JSON).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<crate::documents::DocumentError> for CliError {
    fn from(e: crate::documents::DocumentError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn load_cohort(path: &Path) -> Result<Cohort, CliError> {
    load_csv(path).map_err(|e| {
        let msg = format!("cohort `{}`: {e}", path.display());
        if e.is_io() {
            CliError::Io(msg)
        } else {
            CliError::Config(msg)
        }
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Io(format!("cannot create `{}`: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Generate { config, out } => cmd_generate(g, config.as_deref(), out),
        Command::Audit(a) => cmd_audit(g, a),
        Command::Calibrate { analysis, out } => cmd_calibrate(g, analysis, out),
        Command::Campaign {
            config,
            out,
            trials,
        } => cmd_campaign(g, config.as_deref(), out, *trials),
        Command::Render {
            analysis,
            out,
            bins,
            policy,
        } => cmd_render(g, analysis, out, *bins, policy.as_deref()),
    }
}

fn cmd_generate(g: &GlobalArgs, config: Option<&Path>, out: &Path) -> Result<u8, CliError> {
    let mut synth = match config {
        Some(p) => load_synth_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = g.seed {
        synth.seed = seed;
    }
    let cohort = generate_synthetic(&synth)
        .map_err(|e| CliError::Config(format!("synthetic config: {e}")))?;
    save_csv(&cohort, out)
        .map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", out.display())))?;
    print!("{}", marginal_summary(&cohort, &synth));
    Ok(EXIT_OK)
}

/// Realized group shares and per-group outcome rates next to the configured
/// ones.
pub fn marginal_summary(cohort: &Cohort, synth: &SynthConfig) -> String {
    use std::fmt::Write as _;
    let n = cohort.len() as f64;
    let mut out = format!("records: {}\n", cohort.len());
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>8} {:>8} {:>20} {:>20} {:>20}",
        "group", "count", "share", "target", "mortality", "ventilator", "inpatient"
    );
    let shares = synth.marginals;
    for &feature in ProtectedFeature::ALL {
        let part = subgroup_partition(cohort, feature);
        for (group, members) in part.groups() {
            let target = match group {
                Group::Male => shares.sex.male,
                Group::Female => shares.sex.female,
                Group::White => shares.race.white,
                Group::NonWhite => shares.race.non_white,
                Group::NonSenior => shares.age.non_senior,
                Group::Senior => shares.age.senior,
            };
            let _ = write!(
                out,
                "{:<12} {:>8} {:>8.4} {:>8.4}",
                group.name(),
                members.len(),
                members.len() as f64 / n,
                target
            );
            for &o in Outcome::ALL {
                let pos = members
                    .iter()
                    .filter(|&&i| cohort.records()[i].labels.get(o))
                    .count();
                let rate = pos as f64 / members.len().max(1) as f64;
                let cfg =
                    synth.outcome_rates.get(o).table()[feature_slot(feature)][group_slot(*group)];
                let _ = write!(out, " {:>6} {:.4}/{:.4}", pos, rate, cfg);
            }
            out.push('\n');
        }
    }
    out
}

fn feature_slot(f: ProtectedFeature) -> usize {
    match f {
        ProtectedFeature::Sex => 0,
        ProtectedFeature::Race => 1,
        ProtectedFeature::Senior => 2,
    }
}

fn group_slot(g: Group) -> usize {
    match g {
        Group::Male | Group::White | Group::NonSenior => 0,
        Group::Female | Group::NonWhite | Group::Senior => 1,
    }
}

fn trial_config(g: &GlobalArgs, base: TrialConfig) -> TrialConfig {
    TrialConfig {
        min_sensitivity: g.min_sensitivity.unwrap_or(base.min_sensitivity),
        threshold_rule: g.threshold_rule.unwrap_or(base.threshold_rule),
        ..base
    }
}

pub const DEFAULT_ANALYSIS_SEED: u64 = 2020;

/// Split, train (or load), audit and calibrate a single cohort.
fn analyze(
    g: &GlobalArgs,
    a: &AnalysisArgs,
    force: bool,
) -> Result<
    (
        Cohort,
        fairscreen_core::CohortSplit,
        TrialConfig,
        Option<SplitAnalysis>,
    ),
    CliError,
> {
    let cohort = load_cohort(&a.cohort)?;
    let alpha = g.alpha.unwrap_or(0.05);
    let alpha_effective =
        bonferroni(alpha, a.bonferroni_m).map_err(|e| CliError::Config(e.to_string()))?;
    let config = TrialConfig {
        alpha_effective,
        force_calibration: force,
        ..trial_config(g, TrialConfig::default())
    };
    let seed = g.seed.unwrap_or(DEFAULT_ANALYSIS_SEED);
    let parts = split(
        &cohort,
        &config.split_spec(derive_seed(&[seed, 1]), a.outcome),
    )
    .map_err(|e| CliError::Config(format!("cohort `{}`: {e}", a.cohort.display())))?;
    let mut trial = config.clone();
    if let Some(path) = &a.model {
        let doc = load_model(path)?;
        if doc.feature_names != cohort.feature_names() {
            return Err(CliError::Config(format!(
                "model `{}` was trained on different feature columns",
                path.display()
            )));
        }
        trial.train = doc.train_config.clone();
        let analysis = analyze_model(&parts, a.outcome, &[a.feature], doc.model(), &trial)
            .map_err(|e| CliError::Config(e.to_string()))?;
        return Ok((cohort, parts, trial, analysis));
    }
    let analysis = analyze_split(
        &parts,
        a.outcome,
        &[a.feature],
        derive_seed(&[seed, 2]),
        &trial,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    if let (Some(path), Some(an)) = (&a.model_out, &analysis) {
        save_model(
            &ModelDocument::new(&an.model, a.outcome, cohort.feature_names()),
            path,
        )?;
    }
    Ok((cohort, parts, trial, analysis))
}

fn audit_report(
    a: &AnalysisArgs,
    config: &TrialConfig,
    analysis: &Option<SplitAnalysis>,
) -> AuditReport {
    match analysis {
        Some(an) => AuditReport::from_analysis(an, a.outcome, 0, config.alpha_effective),
        None => AuditReport::untestable(a.outcome, a.feature, config.alpha_effective),
    }
}

fn formats_or(g: &GlobalArgs, default: &[Format]) -> Vec<Format> {
    if g.format.is_empty() {
        default.to_vec()
    } else {
        g.format.clone()
    }
}

fn status_code(s: AuditStatus) -> u8 {
    match s {
        AuditStatus::Unbiased | AuditStatus::Calibrated => EXIT_OK,
        AuditStatus::BiasedUncalibrated => EXIT_BIASED,
        AuditStatus::Untestable => EXIT_UNTESTABLE,
    }
}

fn cmd_audit(g: &GlobalArgs, a: &AnalysisArgs) -> Result<u8, CliError> {
    let (_, _, config, analysis) = analyze(g, a, a.force)?;
    let report = audit_report(a, &config, &analysis);
    for f in formats_or(g, &[Format::Table]) {
        print!("{}", render_audit(&report, f));
    }
    Ok(status_code(report.status))
}

fn cmd_calibrate(g: &GlobalArgs, a: &AnalysisArgs, out: &Path) -> Result<u8, CliError> {
    let (_, _, config, analysis) = analyze(g, a, true)?;
    let report = audit_report(a, &config, &analysis);
    let Some(policy) = report.calibrated.as_ref() else {
        eprintln!("untestable: cannot calibrate {} / {}", a.outcome, a.feature);
        return Ok(EXIT_UNTESTABLE);
    };
    save_policy(&PolicyDocument::new(policy, Some(a.outcome)), out)?;
    for f in formats_or(g, &[Format::Table]) {
        print!("{}", render_audit(&report, f));
    }
    Ok(EXIT_OK)
}

fn cmd_campaign(
    g: &GlobalArgs,
    config: Option<&Path>,
    out: &Path,
    trials: Option<usize>,
) -> Result<u8, CliError> {
    let (mut file, path) = match config {
        Some(p) => (CampaignFile::load(p)?, p.to_path_buf()),
        None => (CampaignFile::default(), PathBuf::from("<default campaign>")),
    };
    let c: &mut CampaignConfig = &mut file.campaign;
    if let Some(seed) = g.seed {
        c.seed = seed;
    }
    if let Some(alpha) = g.alpha {
        c.alpha = alpha;
    }
    if let Some(n) = trials {
        c.n_trials = n;
    }
    c.trial = trial_config(g, c.trial.clone());
    file.validate(&path)?;
    let cohort = file.load_cohort()?;
    let run = run_campaign_parallel(&cohort, &file.campaign, g.workers)
        .map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(out)?;
    for f in formats_or(g, &[Format::Table, Format::Csv, Format::Json]) {
        let text = report::render_campaign(&run.report, &file.campaign, f);
        write_file(&out.join(format!("report.{}", f.extension())), &text)?;
    }
    write_file(
        &out.join("trials.jsonl"),
        &report::render_trial_log(&run.trials),
    )?;
    print!("{}", report::render_table(&run.report));
    Ok(EXIT_OK)
}

fn cmd_render(
    g: &GlobalArgs,
    a: &AnalysisArgs,
    out: &Path,
    bins: usize,
    policy: Option<&Path>,
) -> Result<u8, CliError> {
    let given = policy.map(load_policy).transpose()?;
    let (_, parts, _, analysis) = analyze(g, a, given.is_none())?;
    let Some(an) = analysis else {
        eprintln!(
            "untestable: {} / {} has a single-class split",
            a.outcome, a.feature
        );
        return Ok(EXIT_UNTESTABLE);
    };
    let f = &an.features[0];
    let calibrated = match &given {
        Some(doc) => Some(doc.policy.clone()),
        None => f.calibration.as_ref().map(|c| c.policy.clone()),
    };
    let test_part = subgroup_partition(&parts.test, a.feature);
    let dist = decision_distribution(
        &an.test_scores,
        &parts.test.labels(a.outcome),
        &test_part,
        &an.naive,
        calibrated.as_ref(),
        bins,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(out)?;
    let mut json = serde_json::to_string_pretty(&dist).expect("figure serializes");
    json.push('\n');
    write_file(&out.join("distribution.json"), &json)?;
    write_file(
        &out.join("distribution.csv"),
        &crate::figure::render_csv(&dist),
    )?;
    let title = format!("{} / {}: test-set score distribution", a.outcome, a.feature);
    write_file(&out.join("distribution.svg"), &render_svg(&dist, &title))?;
    for note in &dist.notes {
        eprintln!("note: {note}");
    }
    Ok(EXIT_OK)
}
