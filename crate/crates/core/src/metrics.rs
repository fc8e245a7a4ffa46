//! Classification metrics and the two-proportion test machinery.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("sensitivity undefined without positives")]
    NoPositives,
    #[error("group size must be positive")]
    ZeroGroupSize,
    #[error("count {k} exceeds group size {n}")]
    CountExceedsSize { k: u64, n: u64 },
    #[error("number of comparisons must be at least 1")]
    NoComparisons,
    #[error("{0} must lie in (0, 1)")]
    OutOfUnitInterval(&'static str),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    /// Adds one prediction.
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_predictions(predicted: &[bool], labels: &[bool]) -> Result<Self, MetricsError> {
        if predicted.len() != labels.len() {
            return Err(MetricsError::LengthMismatch(predicted.len(), labels.len()));
        }
        let mut cm = Self::default();
        for (&p, &y) in predicted.iter().zip(labels) {
            cm.record(p, y);
        }
        Ok(cm)
    }
}

/// Two-sided test of `k1/n1 == k2/n2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub k1: u64,
    pub n1: u64,
    pub k2: u64,
    pub n2: u64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// Area under the ROC curve as the normalized Mann-Whitney statistic, ties
/// counted one half. Sorting makes it `O(n log n)`; the statistic is
/// accumulated in doubled integer units so the result is exact.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // 2U = sum over positives of (2 * negatives strictly below + negatives tied).
    let mut doubled_u: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_block, mut neg_block) = (0u64, 0u64);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            if labels[order[j]] {
                pos_block += 1;
            } else {
                neg_block += 1;
            }
            j += 1;
        }
        doubled_u += u128::from(pos_block) * u128::from(2 * neg_below + neg_block);
        neg_below += neg_block;
        i = j;
    }
    Ok(doubled_u as f64 / (2 * u128::from(n_pos) * u128::from(n_neg)) as f64)
}

/// Predicts positive iff `score >= threshold`.
pub fn confusion(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ConfusionMatrix, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        cm.record(s >= threshold, y);
    }
    Ok(cm)
}

pub fn sensitivity(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if cm.positives() == 0 {
        return Err(MetricsError::NoPositives);
    }
    Ok(cm.tp as f64 / cm.positives() as f64)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Two-sided tail probability `P(|Z| >= |z|)`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2).min(1.0)
}

/// Inverse of [`normal_cdf`] for `p` in (0, 1): Acklam's rational
/// approximation followed by two Newton steps.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < 0.024_25 {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - 0.024_25 {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let density = |x: f64| libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    for _ in 0..2 {
        let d = density(x);
        if d <= 0.0 {
            break;
        }
        x -= (normal_cdf(x) - p) / d;
    }
    x
}

fn check_counts(k: u64, n: u64) -> Result<(), MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroGroupSize);
    }
    if k > n {
        return Err(MetricsError::CountExceedsSize { k, n });
    }
    Ok(())
}

/// Pooled-variance z-test, no continuity correction. A pooled proportion of
/// exactly 0 or 1 carries no evidence of a difference: `z = 0, p = 1`.
pub fn two_proportion_ztest(
    k1: u64,
    n1: u64,
    k2: u64,
    n2: u64,
) -> Result<ProportionTest, MetricsError> {
    check_counts(k1, n1)?;
    check_counts(k2, n2)?;
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let (z, p_value) = if k1 + k2 == 0 || k1 + k2 == n1 + n2 {
        (0.0, 1.0)
    } else {
        let se = libm::sqrt(pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f));
        let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
        (z, normal_two_sided_p(z))
    };
    Ok(ProportionTest {
        k1,
        n1,
        k2,
        n2,
        z,
        p_value,
    })
}

pub fn bonferroni(alpha: f64, m: usize) -> Result<f64, MetricsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::OutOfUnitInterval("alpha"));
    }
    if m == 0 {
        return Err(MetricsError::NoComparisons);
    }
    Ok(alpha / m as f64)
}

/// Wald interval for `k1/n1 - k2/n2` with unpooled variance.
pub fn recall_diff_ci(
    k1: u64,
    n1: u64,
    k2: u64,
    n2: u64,
    level: f64,
) -> Result<Interval, MetricsError> {
    check_counts(k1, n1)?;
    check_counts(k2, n2)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::OutOfUnitInterval("level"));
    }
    let p1 = k1 as f64 / n1 as f64;
    let p2 = k2 as f64 / n2 as f64;
    let z = normal_quantile(0.5 + level / 2.0);
    let half = z * libm::sqrt(p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64);
    let diff = p1 - p2;
    Ok(Interval {
        lo: diff - half,
        hi: diff + half,
        level,
    })
}
