//! Logistic regression trained by mini-batch SGD, optionally with a
//! penalty on the gap between subgroup soft sensitivities.
//!
//! The objective on a batch `B` is
//!
//! ```text
//! mean_{i in B} logloss(y_i, z_i) + l2 * |w|^2
//!     + lambda * sum_{a < b} (soft_tpr_a - soft_tpr_b)^2
//! soft_tpr_g = mean_{i in B, y_i = 1, group g} sigmoid((sigmoid(z_i) - 0.5) / temperature)
//! ```
//!
//! where `z_i = b + w . x_i` on standardized features. Pairs in which either
//! group has no positives in the batch contribute nothing.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, Outcome, ProtectedFeature, SubgroupPartition};
use crate::digest::Fnv64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogitError {
    #[error("training cohort is empty")]
    EmptyTrain,
    #[error("outcome `{0}` has a single class in the training data")]
    SingleClass(Outcome),
    #[error("fairness penalty on `{0}` requires a subgroup partition")]
    PenaltyWithoutGroups(ProtectedFeature),
    #[error("fairness penalty on `{penalty}` but partition is over `{partition}`")]
    PenaltyFeatureMismatch {
        penalty: ProtectedFeature,
        partition: ProtectedFeature,
    },
    #[error("partition covers {found} records, cohort has {expected}")]
    PartitionSize { expected: usize, found: usize },
    #[error("non-finite loss during epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("expected {expected} features, found {found}")]
    FeatureLength { expected: usize, found: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessPenalty {
    pub feature: ProtectedFeature,
    pub lambda: f64,
    /// Smoothing of the step in the soft-sensitivity surrogate.
    pub temperature: f64,
}

impl FairnessPenalty {
    pub fn new(feature: ProtectedFeature, lambda: f64) -> Self {
        Self {
            feature,
            lambda,
            temperature: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    pub penalty: Option<FairnessPenalty>,
    /// Fit a per-feature standardization on the training data. When off the
    /// model uses the identity transform.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 256,
            l2: 1e-4,
            seed: 0,
            penalty: None,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LogitError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LogitError::InvalidConfig("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(LogitError::InvalidConfig("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(LogitError::InvalidConfig("batch_size must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(LogitError::InvalidConfig("l2 must be non-negative"));
        }
        if let Some(p) = &self.penalty {
            if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
                return Err(LogitError::InvalidConfig(
                    "penalty lambda must be non-negative",
                ));
            }
            if !(p.temperature > 0.0 && p.temperature.is_finite()) {
                return Err(LogitError::InvalidConfig(
                    "penalty temperature must be positive",
                ));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write_f64(self.learning_rate)
            .write_u64(self.epochs as u64)
            .write_u64(self.batch_size as u64)
            .write_f64(self.l2)
            .write_u64(self.seed)
            .write_bool(self.standardize);
        match &self.penalty {
            None => {
                h.write_bool(false);
            }
            Some(p) => {
                h.write_bool(true)
                    .write_str(p.feature.name())
                    .write_f64(p.lambda)
                    .write_f64(p.temperature);
            }
        }
        h.finish()
    }
}

/// Per-feature `(x - mean) / stddev`, fit on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl Standardization {
    pub fn identity(n_features: usize) -> Self {
        Self {
            means: vec![0.0; n_features],
            stddevs: vec![1.0; n_features],
        }
    }

    /// Population moments. A constant column gets its value as mean and
    /// stddev 1, so it standardizes to exactly zero.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, n_features: usize) -> Self {
        let mut n = 0usize;
        let mut means = vec![0.0; n_features];
        let first: Vec<f64> = rows.clone().next().map(<[f64]>::to_vec).unwrap_or_default();
        let mut constant = vec![true; n_features];
        for row in rows.clone() {
            n += 1;
            for j in 0..n_features {
                means[j] += row[j];
                constant[j] &= row[j] == first[j];
            }
        }
        let nf = n.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; n_features];
        for row in rows {
            for j in 0..n_features {
                let d = row[j] - means[j];
                var[j] += d * d;
            }
        }
        let mut stddevs = vec![1.0; n_features];
        for j in 0..n_features {
            if constant[j] {
                means[j] = first.get(j).copied().unwrap_or(0.0);
            } else {
                stddevs[j] = libm::sqrt(var[j] / nf);
            }
        }
        Self { means, stddevs }
    }

    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.means[j]) / self.stddevs[j];
        }
    }
}

/// A batch of raw (unstandardized) examples.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub rows: &'a [Vec<f64>],
    pub labels: &'a [bool],
    /// Group slot per example; required when a penalty is evaluated.
    pub groups: Option<&'a [usize]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardization: Standardization,
    pub train_config: TrainConfig,
}

impl LogitModel {
    /// All-zero model with identity standardization.
    pub fn zeros(n_features: usize, train_config: TrainConfig) -> Self {
        Self {
            weights: vec![0.0; n_features],
            intercept: 0.0,
            standardization: Standardization::identity(n_features),
            train_config,
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn check_width(&self, found: usize) -> Result<(), LogitError> {
        if found != self.n_features() {
            return Err(LogitError::FeatureLength {
                expected: self.n_features(),
                found,
            });
        }
        Ok(())
    }

    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64, LogitError> {
        self.check_width(row.len())?;
        let s = &self.standardization;
        Ok(self.intercept
            + row
                .iter()
                .zip(&self.weights)
                .enumerate()
                .map(|(j, (x, w))| w * ((x - s.means[j]) / s.stddevs[j]))
                .sum::<f64>())
    }

    pub fn score(&self, row: &[f64]) -> Result<f64, LogitError> {
        self.linear_predictor(row).map(sigmoid)
    }

    /// `sigmoid(intercept + weights . standardize(features))` per record.
    pub fn predict_scores(&self, cohort: &Cohort) -> Result<Vec<f64>, LogitError> {
        cohort
            .records()
            .iter()
            .map(|r| self.score(&r.features))
            .collect()
    }

    /// Loss and gradient `[d/dw..., d/db]` of the training objective on
    /// `batch`, with the model's own `l2`.
    pub fn loss_and_gradient(
        &self,
        batch: &Batch<'_>,
        penalty: Option<&FairnessPenalty>,
    ) -> Result<(f64, Vec<f64>), LogitError> {
        if batch.rows.is_empty() {
            return Err(LogitError::EmptyBatch);
        }
        if let Some(p) = penalty {
            if batch.groups.is_none() {
                return Err(LogitError::PenaltyWithoutGroups(p.feature));
            }
        }
        let k = self.n_features();
        let mut x = Vec::with_capacity(batch.rows.len() * k);
        let mut buf = vec![0.0; k];
        for row in batch.rows {
            self.check_width(row.len())?;
            self.standardization.apply(row, &mut buf);
            x.extend_from_slice(&buf);
        }
        let design = Design {
            x,
            cols: k,
            labels: batch.labels.to_vec(),
            slots: batch.groups.map(<[usize]>::to_vec),
            n_groups: batch
                .groups
                .map_or(0, |g| g.iter().copied().max().map_or(0, |m| m + 1)),
        };
        let rows: Vec<usize> = (0..batch.rows.len()).collect();
        let mut grad = vec![0.0; k + 1];
        let loss = design.objective(
            &rows,
            &self.weights,
            self.intercept,
            self.train_config.l2,
            penalty.map(|p| (p.lambda, p.temperature)),
            &mut grad,
        );
        Ok((loss, grad))
    }
}

/// Standardized row-major design matrix with labels and group slots.
struct Design {
    x: Vec<f64>,
    cols: usize,
    labels: Vec<bool>,
    slots: Option<Vec<usize>>,
    n_groups: usize,
}

impl Design {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    /// Objective over `rows`; writes the gradient into `grad`
    /// (`cols` weights followed by the intercept).
    fn objective(
        &self,
        rows: &[usize],
        weights: &[f64],
        intercept: f64,
        l2: f64,
        penalty: Option<(f64, f64)>,
        grad: &mut [f64],
    ) -> f64 {
        let k = self.cols;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let inv_b = 1.0 / rows.len() as f64;

        let logits: Vec<f64> = rows
            .iter()
            .map(|&i| {
                intercept
                    + self
                        .row(i)
                        .iter()
                        .zip(weights)
                        .map(|(x, w)| x * w)
                        .sum::<f64>()
            })
            .collect();
        // d loss / d logit per batch example.
        let mut dz: Vec<f64> = Vec::with_capacity(rows.len());
        let mut loss = 0.0;
        for (&i, &z) in rows.iter().zip(&logits) {
            let y = self.labels[i];
            loss += softplus(z) - if y { z } else { 0.0 };
            dz.push((sigmoid(z) - if y { 1.0 } else { 0.0 }) * inv_b);
        }
        loss *= inv_b;

        if let (Some((lambda, temperature)), Some(slots)) = (penalty, &self.slots) {
            if lambda > 0.0 {
                loss += self.add_penalty(rows, &logits, slots, lambda, temperature, &mut dz);
            }
        }

        for (&i, &d) in rows.iter().zip(&dz) {
            for (g, x) in grad[..k].iter_mut().zip(self.row(i)) {
                *g += d * x;
            }
            grad[k] += d;
        }
        for (g, w) in grad[..k].iter_mut().zip(weights) {
            *g += 2.0 * l2 * w;
        }
        loss + l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn add_penalty(
        &self,
        rows: &[usize],
        logits: &[f64],
        slots: &[usize],
        lambda: f64,
        temperature: f64,
        dz: &mut [f64],
    ) -> f64 {
        let n_groups = self.n_groups;
        let mut count = vec![0usize; n_groups];
        let mut sum = vec![0.0; n_groups];
        for (&i, &z) in rows.iter().zip(logits) {
            if self.labels[i] && slots[i] < n_groups {
                count[slots[i]] += 1;
                sum[slots[i]] += sigmoid((sigmoid(z) - 0.5) / temperature);
            }
        }
        let tpr: Vec<f64> = (0..n_groups)
            .map(|g| {
                if count[g] > 0 {
                    sum[g] / count[g] as f64
                } else {
                    0.0
                }
            })
            .collect();
        // d penalty / d soft_tpr_g
        let mut dtpr = vec![0.0; n_groups];
        let mut penalty = 0.0;
        for a in 0..n_groups {
            for b in a + 1..n_groups {
                if count[a] == 0 || count[b] == 0 {
                    continue;
                }
                let d = tpr[a] - tpr[b];
                penalty += d * d;
                dtpr[a] += 2.0 * lambda * d;
                dtpr[b] -= 2.0 * lambda * d;
            }
        }
        for (pos, (&i, &z)) in rows.iter().zip(logits).enumerate() {
            let g = slots[i];
            if !self.labels[i] || g >= n_groups || count[g] == 0 || dtpr[g] == 0.0 {
                continue;
            }
            let p = sigmoid(z);
            let s = sigmoid((p - 0.5) / temperature);
            dz[pos] += dtpr[g] / count[g] as f64 * s * (1.0 - s) * p * (1.0 - p) / temperature;
        }
        lambda * penalty
    }
}

/// Trains a model; see [`train_traced`].
pub fn train(
    train: &Cohort,
    outcome: Outcome,
    groups: Option<&SubgroupPartition>,
    config: &TrainConfig,
) -> Result<LogitModel, LogitError> {
    train_traced(train, outcome, groups, config).map(|(model, _)| model)
}

/// Trains a model and also returns the full-data objective before the first
/// epoch and after every epoch.
pub fn train_traced(
    train: &Cohort,
    outcome: Outcome,
    groups: Option<&SubgroupPartition>,
    config: &TrainConfig,
) -> Result<(LogitModel, Vec<f64>), LogitError> {
    config.validate()?;
    if train.is_empty() {
        return Err(LogitError::EmptyTrain);
    }
    let positives = train.positives(outcome);
    if positives == 0 || positives == train.len() {
        return Err(LogitError::SingleClass(outcome));
    }
    let slots = match (&config.penalty, groups) {
        (Some(p), None) => return Err(LogitError::PenaltyWithoutGroups(p.feature)),
        (Some(p), Some(part)) if part.feature() != p.feature => {
            return Err(LogitError::PenaltyFeatureMismatch {
                penalty: p.feature,
                partition: part.feature(),
            })
        }
        (_, Some(part)) => {
            if part.len() != train.len() {
                return Err(LogitError::PartitionSize {
                    expected: train.len(),
                    found: part.len(),
                });
            }
            Some(part.slots())
        }
        (None, None) => None,
    };

    let k = train.n_features();
    let rows = train.records().iter().map(|r| r.features.as_slice());
    let standardization = if config.standardize {
        Standardization::fit(rows, k)
    } else {
        Standardization::identity(k)
    };
    let mut x = Vec::with_capacity(train.len() * k);
    let mut buf = vec![0.0; k];
    for r in train.records() {
        standardization.apply(&r.features, &mut buf);
        x.extend_from_slice(&buf);
    }
    let n_groups = groups.map_or(0, |p| p.groups().len());
    let design = Design {
        x,
        cols: k,
        labels: train.labels(outcome),
        slots,
        n_groups,
    };
    // Columns that are identically zero after standardization keep weight 0.
    let pinned: Vec<bool> = (0..k)
        .map(|j| (0..design.len()).all(|i| design.row(i)[j] == 0.0))
        .collect();

    let penalty = config.penalty.map(|p| (p.lambda, p.temperature));
    let mut weights = vec![0.0; k];
    let mut intercept = 0.0;
    let mut grad = vec![0.0; k + 1];
    let all: Vec<usize> = (0..design.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs + 1);
    trace.push(design.objective(&all, &weights, intercept, config.l2, penalty, &mut grad));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = all.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let loss = design.objective(chunk, &weights, intercept, config.l2, penalty, &mut grad);
            if !loss.is_finite() {
                return Err(LogitError::NonFiniteLoss { epoch });
            }
            for j in 0..k {
                if !pinned[j] {
                    weights[j] -= config.learning_rate * grad[j];
                }
            }
            intercept -= config.learning_rate * grad[k];
        }
        let full = design.objective(&all, &weights, intercept, config.l2, penalty, &mut grad);
        if !full.is_finite() {
            return Err(LogitError::NonFiniteLoss { epoch });
        }
        trace.push(full);
    }

    Ok((
        LogitModel {
            weights,
            intercept,
            standardization,
            train_config: config.clone(),
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::test_support::record;
    use crate::cohort::{subgroup_partition, Provenance, RaceGroup, Sex};
    use crate::metrics::auc;
    use rand::Rng;

    fn toy_cohort(rows: &[(f64, f64, bool)]) -> Cohort {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, b, y))| {
                let sex = if i % 2 == 0 { Sex::Male } else { Sex::Female };
                let mut r = record(i, sex, RaceGroup::White, 40, vec![a, b]);
                r.labels.mortality = y;
                r
            })
            .collect();
        Cohort::new(records, vec!["a".into(), "b".into()], Provenance::Loaded).unwrap()
    }

    fn noisy_cohort(n: usize, seed: u64, informative: bool) -> Cohort {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(f64, f64, bool)> = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(-2.0..2.0);
                let b: f64 = rng.random_range(-2.0..2.0);
                let y = if informative {
                    rng.random::<f64>() < sigmoid(2.0 * a - b)
                } else {
                    rng.random::<bool>()
                };
                (a, b, y)
            })
            .collect();
        toy_cohort(&rows)
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(libm::log(3.0)) - 0.75).abs() < 1e-15);
        let tiny = sigmoid(-50.0);
        assert!(tiny > 0.0 && tiny < 1e-20);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!(sigmoid(-1000.0) >= 0.0);
        for &x in &[-30.0, -3.3, -0.1, 0.7, 12.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
            assert!(sigmoid(x) < sigmoid(x + 1e-3));
        }
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let rows: Vec<(f64, f64, bool)> = (0..40)
            .map(|i| {
                let a = i as f64 / 10.0 - 2.0;
                (a, (i % 7) as f64, a > 0.0)
            })
            .collect();
        let c = toy_cohort(&rows);
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 200,
            l2: 0.0,
            ..TrainConfig::default()
        };
        let m = train(&c, Outcome::Mortality, None, &cfg).unwrap();
        let scores = m.predict_scores(&c).unwrap();
        for (s, &(_, _, y)) in scores.iter().zip(&rows) {
            assert_eq!(*s >= 0.5, y);
        }
    }

    #[test]
    fn coin_flip_labels_give_chance_auc() {
        let mut aucs = Vec::new();
        for seed in 0..20 {
            let train_c = noisy_cohort(400, seed, false);
            let held_out = noisy_cohort(400, 1000 + seed, false);
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let m = train(&train_c, Outcome::Mortality, None, &cfg).unwrap();
            let s = m.predict_scores(&held_out).unwrap();
            let a = auc(&s, &held_out.labels(Outcome::Mortality)).unwrap();
            assert!((0.4..=0.6).contains(&a), "seed {seed}: auc {a}");
            aucs.push(a);
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!((mean - 0.5).abs() < 0.05);
    }

    #[test]
    fn zero_lambda_matches_naive_training() {
        let c = noisy_cohort(500, 3, true);
        let part = subgroup_partition(&c, ProtectedFeature::Sex);
        let naive = TrainConfig {
            seed: 9,
            ..TrainConfig::default()
        };
        let penalized = TrainConfig {
            penalty: Some(FairnessPenalty::new(ProtectedFeature::Sex, 0.0)),
            ..naive.clone()
        };
        let a = train(&c, Outcome::Mortality, None, &naive).unwrap();
        let b = train(&c, Outcome::Mortality, Some(&part), &penalized).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((a.intercept - b.intercept).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let c = noisy_cohort(300, 4, true);
        let cfg = TrainConfig {
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&c, Outcome::Mortality, None, &cfg).unwrap();
        assert_eq!(a, train(&c, Outcome::Mortality, None, &cfg).unwrap());
        let other = TrainConfig { seed: 6, ..cfg };
        assert_ne!(
            a.weights,
            train(&c, Outcome::Mortality, None, &other).unwrap().weights
        );
    }

    #[test]
    fn training_errors() {
        let c = toy_cohort(&[(0.0, 1.0, true), (1.0, 0.0, true)]);
        assert_eq!(
            train(&c, Outcome::Mortality, None, &TrainConfig::default()),
            Err(LogitError::SingleClass(Outcome::Mortality))
        );
        let c = noisy_cohort(50, 1, true);
        let cfg = TrainConfig {
            penalty: Some(FairnessPenalty::new(ProtectedFeature::Sex, 1.0)),
            ..TrainConfig::default()
        };
        assert_eq!(
            train(&c, Outcome::Mortality, None, &cfg),
            Err(LogitError::PenaltyWithoutGroups(ProtectedFeature::Sex))
        );
        let wrong = subgroup_partition(&c, ProtectedFeature::Race);
        assert!(matches!(
            train(&c, Outcome::Mortality, Some(&wrong), &cfg),
            Err(LogitError::PenaltyFeatureMismatch { .. })
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&c, Outcome::Mortality, None, &bad),
            Err(LogitError::InvalidConfig(_))
        ));
    }

    #[test]
    fn divergent_training_reports_epoch() {
        let c = noisy_cohort(100, 2, true);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            l2: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&c, Outcome::Mortality, None, &cfg),
            Err(LogitError::NonFiniteLoss { epoch: 0 })
        ));
    }

    #[test]
    fn constant_feature_keeps_zero_weight() {
        let rows: Vec<(f64, f64, bool)> = (0..60).map(|i| (i as f64, 0.3, i % 3 == 0)).collect();
        let c = toy_cohort(&rows);
        let m = train(&c, Outcome::Mortality, None, &TrainConfig::default()).unwrap();
        assert_eq!(m.weights[1], 0.0);
        assert_eq!(m.standardization.stddevs[1], 1.0);
        assert!(m.standardization.stddevs.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn zero_model_loss_is_ln2() {
        let m = LogitModel::zeros(2, TrainConfig::default());
        let rows = vec![
            vec![1.0, 2.0],
            vec![-1.0, 0.5],
            vec![0.0, 0.0],
            vec![3.0, -1.0],
        ];
        let labels = [true, false, true, false];
        let groups = [0, 0, 1, 1];
        let batch = Batch {
            rows: &rows,
            labels: &labels,
            groups: Some(&groups),
        };
        let (loss, _) = m.loss_and_gradient(&batch, None).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
        // Both groups' soft TPRs are sigmoid(0) = 0.5, so the penalty vanishes.
        let pen = FairnessPenalty::new(ProtectedFeature::Sex, 3.0);
        let (loss, _) = m.loss_and_gradient(&batch, Some(&pen)).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn one_sided_positives_contribute_no_penalty() {
        let m = LogitModel {
            weights: vec![0.8, -0.4],
            intercept: 0.1,
            ..LogitModel::zeros(2, TrainConfig::default())
        };
        let rows = vec![
            vec![1.0, 2.0],
            vec![-1.0, 0.5],
            vec![0.0, 0.0],
            vec![3.0, -1.0],
        ];
        let labels = [true, true, false, false];
        let groups = [0, 0, 1, 1];
        let batch = Batch {
            rows: &rows,
            labels: &labels,
            groups: Some(&groups),
        };
        let plain = m.loss_and_gradient(&batch, None).unwrap();
        let pen = FairnessPenalty::new(ProtectedFeature::Sex, 50.0);
        assert_eq!(plain, m.loss_and_gradient(&batch, Some(&pen)).unwrap());
    }

    #[test]
    fn predict_scores_hand_computed() {
        let rows = [(1.0, 0.0, true), (0.0, 2.0, false), (-1.0, -1.0, true)];
        let c = toy_cohort(&rows);
        let m = LogitModel {
            weights: vec![0.5, -0.25],
            intercept: 0.1,
            ..LogitModel::zeros(2, TrainConfig::default())
        };
        let s = m.predict_scores(&c).unwrap();
        let want = [0.6, -0.4, -0.15].map(|z: f64| 1.0 / (1.0 + libm::exp(-z)));
        for (a, b) in s.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = LogitModel::zeros(2, TrainConfig::default());
        assert!(zero.predict_scores(&c).unwrap().iter().all(|&x| x == 0.5));
        let wide = LogitModel::zeros(3, TrainConfig::default());
        assert!(matches!(
            wide.predict_scores(&c),
            Err(LogitError::FeatureLength { .. })
        ));
    }

    #[test]
    fn doubling_positive_weight_feature_raises_score() {
        let m = LogitModel {
            weights: vec![0.7, 0.0],
            ..LogitModel::zeros(2, TrainConfig::default())
        };
        assert!(m.score(&[2.0, 1.0]).unwrap() > m.score(&[1.0, 1.0]).unwrap());
    }

    #[test]
    fn full_batch_descent_never_increases_loss() {
        let c = noisy_cohort(200, 8, true);
        let cfg = TrainConfig {
            batch_size: 200,
            learning_rate: 0.05,
            epochs: 40,
            ..TrainConfig::default()
        };
        let (_, trace) = train_traced(&c, Outcome::Mortality, None, &cfg).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} -> {}", w[0], w[1]);
        }
        assert!(trace.last().unwrap() < &trace[0]);
    }

    #[test]
    fn prestandardized_data_with_identity_transform_gives_same_scores() {
        let c = noisy_cohort(300, 12, true);
        let cfg = TrainConfig {
            seed: 2,
            ..TrainConfig::default()
        };
        let fitted = train(&c, Outcome::Mortality, None, &cfg).unwrap();
        let st = &fitted.standardization;
        let mut records = c.records().to_vec();
        for r in &mut records {
            let raw = r.features.clone();
            st.apply(&raw, &mut r.features);
        }
        let pre = Cohort::new(records, c.feature_names().to_vec(), Provenance::Loaded).unwrap();
        let identity_cfg = TrainConfig {
            standardize: false,
            ..cfg
        };
        let plain = train(&pre, Outcome::Mortality, None, &identity_cfg).unwrap();
        let a = fitted.predict_scores(&c).unwrap();
        let b = plain.predict_scores(&pre).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
