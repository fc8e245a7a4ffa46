use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cohort, CohortError, Outcome, Provenance};

/// Minimum cohort size accepted by [`split`].
pub const MIN_SPLIT_RECORDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify_on: Option<Outcome>,
}

impl SplitSpec {
    /// 60/20/20, optionally stratified.
    pub fn standard(seed: u64, stratify_on: Option<Outcome>) -> Self {
        Self {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            seed,
            stratify_on,
        }
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(CohortError::InvalidSplit("fractions must lie in (0, 1)"));
        }
        if libm::fabs(fr.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(CohortError::InvalidSplit("fractions must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortSplit {
    pub train: Cohort,
    pub val: Cohort,
    pub test: Cohort,
}

fn round_count(n: usize, fraction: f64) -> usize {
    libm::round(n as f64 * fraction) as usize
}

/// Part sizes `[train, val, test]` for `n` items; test takes the remainder.
fn part_sizes(n: usize, spec: &SplitSpec) -> [usize; 3] {
    let train = round_count(n, spec.train_fraction).min(n);
    let val = round_count(n, spec.val_fraction).min(n - train);
    [train, val, n - train - val]
}

/// Disjoint train/validation/test partition. Each part keeps the input
/// order of its records.
pub fn split(cohort: &Cohort, spec: &SplitSpec) -> Result<CohortSplit, CohortError> {
    spec.validate()?;
    let n = cohort.len();
    if n < MIN_SPLIT_RECORDS {
        return Err(CohortError::TooSmall {
            required: MIN_SPLIT_RECORDS,
            found: n,
        });
    }
    let sizes = part_sizes(n, spec);
    for (size, name) in sizes.iter().zip(["train", "val", "test"]) {
        if *size == 0 {
            return Err(CohortError::EmptyPart(name));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    match spec.stratify_on {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            parts[0] = order[..sizes[0]].to_vec();
            parts[1] = order[sizes[0]..sizes[0] + sizes[1]].to_vec();
            parts[2] = order[sizes[0] + sizes[1]..].to_vec();
        }
        Some(outcome) => {
            let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| cohort.records()[i].labels.get(outcome));
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            let pos_sizes = stratum_sizes(pos.len(), spec, &sizes);
            let mut p = 0;
            let mut q = 0;
            for k in 0..3 {
                let take_pos = pos_sizes[k];
                let take_neg = sizes[k] - take_pos;
                parts[k].extend_from_slice(&pos[p..p + take_pos]);
                parts[k].extend_from_slice(&neg[q..q + take_neg]);
                p += take_pos;
                q += take_neg;
            }
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    let prov = cohort.provenance();
    let [train, val, test] = parts;
    Ok(CohortSplit {
        train: cohort.select(&train, prov),
        val: cohort.select(&val, prov),
        test: cohort.select(&test, prov),
    })
}

/// Positives per part: proportional rounding, then clamped so every part can
/// still be filled with the available negatives.
fn stratum_sizes(n_pos: usize, spec: &SplitSpec, sizes: &[usize; 3]) -> [usize; 3] {
    let total: usize = sizes.iter().sum();
    let n_neg = total - n_pos;
    let mut pos = part_sizes(n_pos, spec);
    for k in 0..3 {
        pos[k] = pos[k].min(sizes[k]);
    }
    // Redistribute any shortfall or excess one record at a time.
    loop {
        let assigned: usize = pos.iter().sum();
        if assigned == n_pos {
            break;
        }
        if assigned < n_pos {
            let k = (0..3)
                .filter(|&k| pos[k] < sizes[k])
                .max_by_key(|&k| sizes[k] - pos[k])
                .expect("positives fit in the cohort");
            pos[k] += 1;
        } else {
            let k = (0..3)
                .filter(|&k| pos[k] > 0)
                .max_by_key(|&k| pos[k])
                .unwrap();
            pos[k] -= 1;
        }
    }
    // Negatives needed per part must not exceed those available.
    debug_assert_eq!((0..3).map(|k| sizes[k] - pos[k]).sum::<usize>(), n_neg);
    pos
}

/// Same-size resample drawn uniformly with replacement.
pub fn bootstrap_resample(cohort: &Cohort, seed: u64) -> Result<Cohort, CohortError> {
    bootstrap_with_parent(cohort, seed, cohort.digest())
}

/// [`bootstrap_resample`] with a precomputed parent digest.
pub(crate) fn bootstrap_with_parent(
    cohort: &Cohort,
    seed: u64,
    parent_digest: u64,
) -> Result<Cohort, CohortError> {
    let n = cohort.len();
    if n == 0 {
        return Err(CohortError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    Ok(cohort.select(
        &indices,
        Provenance::Resampled {
            seed,
            parent_digest,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::test_support::record;
    use crate::cohort::{RaceGroup, Sex};
    use alloc::collections::BTreeSet;
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    fn cohort(n: usize, positive_every: usize) -> Cohort {
        let records = (0..n)
            .map(|i| {
                let mut r = record(i, Sex::Male, RaceGroup::White, 40, vec![i as f64]);
                r.labels.mortality = i % positive_every == 0;
                r
            })
            .collect();
        Cohort::new(records, vec!["f1".into()], Provenance::Loaded).unwrap()
    }

    fn ids(c: &Cohort) -> Vec<String> {
        c.records().iter().map(|r| r.id.clone()).collect()
    }

    #[test]
    fn exact_fraction_sizes() {
        let s = split(&cohort(100, 3), &SplitSpec::standard(7, None)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
    }

    #[test]
    fn stratified_parts_track_positive_rate() {
        let c = cohort(5000, 10);
        let s = split(&c, &SplitSpec::standard(3, Some(Outcome::Mortality))).unwrap();
        for part in [&s.train, &s.val, &s.test] {
            let rate = part.positives(Outcome::Mortality) as f64 / part.len() as f64;
            assert!((rate - 0.1).abs() < 0.02, "rate {rate}");
        }
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 5000);
    }

    #[test]
    fn split_is_deterministic() {
        let c = cohort(300, 4);
        let spec = SplitSpec::standard(11, Some(Outcome::Mortality));
        assert_eq!(split(&c, &spec).unwrap(), split(&c, &spec).unwrap());
        let other = SplitSpec { seed: 12, ..spec };
        assert_ne!(
            split(&c, &spec).unwrap().train,
            split(&c, &other).unwrap().train
        );
    }

    #[test]
    fn split_rejects_bad_specs() {
        let c = cohort(100, 2);
        let mut spec = SplitSpec::standard(0, None);
        spec.test_fraction = 0.3;
        assert!(matches!(
            split(&c, &spec),
            Err(CohortError::InvalidSplit(_))
        ));
        assert!(matches!(
            split(&cohort(9, 2), &SplitSpec::standard(0, None)),
            Err(CohortError::TooSmall { .. })
        ));
        let tiny = SplitSpec {
            train_fraction: 0.96,
            val_fraction: 0.02,
            test_fraction: 0.02,
            seed: 0,
            stratify_on: None,
        };
        assert!(matches!(
            split(&cohort(10, 2), &tiny),
            Err(CohortError::EmptyPart(_))
        ));
    }

    #[test]
    fn single_record_bootstrap_repeats_it() {
        let c = cohort(1, 1);
        let r = bootstrap_resample(&c, 99).unwrap();
        assert_eq!(r.records(), c.records());
        assert!(matches!(
            r.provenance(),
            Provenance::Resampled { seed: 99, .. }
        ));
    }

    #[test]
    fn bootstrap_distinct_fraction_approaches_one_minus_inv_e() {
        let c = cohort(2000, 5);
        let mut total = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let r = bootstrap_resample(&c, seed).unwrap();
            let distinct: BTreeSet<&str> = r.records().iter().map(|x| x.id.as_str()).collect();
            total += distinct.len() as f64 / c.len() as f64;
        }
        let mean = total / seeds as f64;
        let expected = 1.0 - libm::exp(-1.0);
        assert!(
            (mean - expected).abs() < 0.01,
            "mean distinct fraction {mean}"
        );
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let c = cohort(50, 3);
        assert_eq!(
            bootstrap_resample(&c, 5).unwrap(),
            bootstrap_resample(&c, 5).unwrap()
        );
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 10usize..400, every in 1usize..20, seed: u64, strat: bool) {
            let c = cohort(n, every);
            let spec = SplitSpec::standard(seed, strat.then_some(Outcome::Mortality));
            let s = split(&c, &spec).unwrap();
            let mut all: Vec<String> = [&s.train, &s.val, &s.test].iter().flat_map(|p| ids(p)).collect();
            all.sort();
            let mut want = ids(&c);
            want.sort();
            prop_assert_eq!(all, want);
            for (part, f) in [(&s.train, 0.6), (&s.val, 0.2), (&s.test, 0.2)] {
                prop_assert!((part.len() as f64 - n as f64 * f).abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn bootstrap_preserves_size(n in 1usize..300, seed: u64) {
            prop_assert_eq!(bootstrap_resample(&cohort(n, 2), seed).unwrap().len(), n);
        }
    }
}
