//! Cohort data model, subgroup partitions, splits and bootstrap resamples.

mod resample;
mod synth;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::Fnv64;

pub(crate) use resample::bootstrap_with_parent;
pub use resample::{bootstrap_resample, split, CohortSplit, SplitSpec};
pub use synth::{
    generate_synthetic, AgeShares, Marginals, OutcomeRates, RaceShares, SexShares, SubgroupRates,
    SynthConfig,
};

/// Age at which a patient counts as senior (inclusive).
pub const SENIOR_AGE: u32 = 62;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("cohort is empty")]
    Empty,
    #[error("record {index} has {found} features, expected {expected}")]
    FeatureLength {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("cohort has {found} records, at least {required} required")]
    TooSmall { required: usize, found: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(&'static str),
    #[error("split part `{0}` would be empty")]
    EmptyPart(&'static str),
    #[error("invalid synthetic config field `{field}`: {reason}")]
    InvalidConfig {
        field: &'static str,
        reason: &'static str,
    },
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident, $kind:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = CohortError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(CohortError::UnknownName { kind: $kind, value: s.into() }),
                }
            }
        }
    };
}

named_enum!(
    /// Binary clinical outcome a model is trained to predict.
    Outcome, "outcome" {
        Mortality => "mortality",
        Ventilator => "ventilator",
        Inpatient => "inpatient",
    }
);

named_enum!(Sex, "sex" { Male => "male", Female => "female" });

named_enum!(RaceGroup, "race group" { White => "white", NonWhite => "non_white" });

named_enum!(
    /// Attribute whose subgroups must receive equal sensitivity.
    ProtectedFeature, "protected feature" {
        Sex => "sex",
        Race => "race",
        Senior => "senior",
    }
);

named_enum!(
    /// One side of a protected feature.
    Group, "group" {
        Male => "male",
        Female => "female",
        White => "white",
        NonWhite => "non_white",
        NonSenior => "non_senior",
        Senior => "senior",
    }
);

impl ProtectedFeature {
    /// The two groups of this feature, in reporting order.
    pub fn groups(self) -> [Group; 2] {
        match self {
            ProtectedFeature::Sex => [Group::Male, Group::Female],
            ProtectedFeature::Race => [Group::NonWhite, Group::White],
            ProtectedFeature::Senior => [Group::NonSenior, Group::Senior],
        }
    }
}

impl Group {
    pub fn feature(self) -> ProtectedFeature {
        match self {
            Group::Male | Group::Female => ProtectedFeature::Sex,
            Group::White | Group::NonWhite => ProtectedFeature::Race,
            Group::NonSenior | Group::Senior => ProtectedFeature::Senior,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labels {
    pub mortality: bool,
    pub ventilator: bool,
    pub inpatient: bool,
}

impl Labels {
    pub fn get(&self, outcome: Outcome) -> bool {
        match outcome {
            Outcome::Mortality => self.mortality,
            Outcome::Ventilator => self.ventilator,
            Outcome::Inpatient => self.inpatient,
        }
    }

    pub fn set(&mut self, outcome: Outcome, value: bool) {
        match outcome {
            Outcome::Mortality => self.mortality = value,
            Outcome::Ventilator => self.ventilator = value,
            Outcome::Inpatient => self.inpatient = value,
        }
    }
}

/// One screened patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub id: String,
    pub features: Vec<f64>,
    pub sex: Sex,
    pub race_group: RaceGroup,
    pub age_years: u32,
    pub labels: Labels,
}

impl CohortRecord {
    pub fn is_senior(&self) -> bool {
        self.age_years >= SENIOR_AGE
    }

    pub fn group(&self, feature: ProtectedFeature) -> Group {
        match feature {
            ProtectedFeature::Sex => match self.sex {
                Sex::Male => Group::Male,
                Sex::Female => Group::Female,
            },
            ProtectedFeature::Race => match self.race_group {
                RaceGroup::White => Group::White,
                RaceGroup::NonWhite => Group::NonWhite,
            },
            ProtectedFeature::Senior => {
                if self.is_senior() {
                    Group::Senior
                } else {
                    Group::NonSenior
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Loaded,
    Synthetic { seed: u64, config_digest: u64 },
    Resampled { seed: u64, parent_digest: u64 },
}

/// An immutable, validated collection of records.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    records: Vec<CohortRecord>,
    feature_names: Vec<String>,
    provenance: Provenance,
}

impl Cohort {
    /// Validates feature lengths, non-emptiness and (except for resamples)
    /// id uniqueness.
    pub fn new(
        records: Vec<CohortRecord>,
        feature_names: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self, CohortError> {
        if records.is_empty() {
            return Err(CohortError::Empty);
        }
        let expected = feature_names.len();
        for (index, r) in records.iter().enumerate() {
            if r.features.len() != expected {
                return Err(CohortError::FeatureLength {
                    index,
                    expected,
                    found: r.features.len(),
                });
            }
        }
        if !matches!(provenance, Provenance::Resampled { .. }) {
            let mut seen = BTreeSet::new();
            for r in &records {
                if !seen.insert(r.id.as_str()) {
                    return Err(CohortError::DuplicateId(r.id.clone()));
                }
            }
        }
        Ok(Self {
            records,
            feature_names,
            provenance,
        })
    }

    /// Skips validation; callers guarantee the invariants (subsets and
    /// resamples of an already valid cohort).
    pub(crate) fn from_parts_unchecked(
        records: Vec<CohortRecord>,
        feature_names: Vec<String>,
        provenance: Provenance,
    ) -> Self {
        Self {
            records,
            feature_names,
            provenance,
        }
    }

    pub fn records(&self) -> &[CohortRecord] {
        &self.records
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self, outcome: Outcome) -> Vec<bool> {
        self.records.iter().map(|r| r.labels.get(outcome)).collect()
    }

    pub fn positives(&self, outcome: Outcome) -> usize {
        self.records
            .iter()
            .filter(|r| r.labels.get(outcome))
            .count()
    }

    /// Content digest over feature names and every record field. Provenance
    /// is not included.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write_u64(self.feature_names.len() as u64);
        for name in &self.feature_names {
            h.write_str(name);
        }
        h.write_u64(self.records.len() as u64);
        for r in &self.records {
            h.write_str(&r.id);
            for &x in &r.features {
                h.write_f64(x);
            }
            h.write_str(r.sex.name())
                .write_str(r.race_group.name())
                .write_u64(u64::from(r.age_years))
                .write_bool(r.labels.mortality)
                .write_bool(r.labels.ventilator)
                .write_bool(r.labels.inpatient);
        }
        h.finish()
    }

    /// New cohort holding the records at `indices`, in that order.
    pub fn select(&self, indices: &[usize], provenance: Provenance) -> Self {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::from_parts_unchecked(records, self.feature_names.clone(), provenance)
    }
}

/// Index sets of a cohort, one per group of a protected feature.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupPartition {
    feature: ProtectedFeature,
    groups: Vec<(Group, Vec<usize>)>,
    len: usize,
}

impl SubgroupPartition {
    /// Builds a partition from an explicit group per record. Groups appear in
    /// the feature's reporting order; groups with no members are kept so
    /// degenerate cohorts still show both sides.
    pub fn from_assignments(feature: ProtectedFeature, assignments: &[Group]) -> Self {
        let mut groups: Vec<(Group, Vec<usize>)> =
            feature.groups().iter().map(|&g| (g, Vec::new())).collect();
        for (i, g) in assignments.iter().enumerate() {
            debug_assert_eq!(g.feature(), feature);
            if let Some((_, idx)) = groups.iter_mut().find(|(k, _)| k == g) {
                idx.push(i);
            }
        }
        Self {
            feature,
            groups,
            len: assignments.len(),
        }
    }

    /// A partition with a single group covering `len` records.
    pub fn single(group: Group, len: usize) -> Self {
        Self {
            feature: group.feature(),
            groups: alloc::vec![(group, (0..len).collect())],
            len,
        }
    }

    pub fn feature(&self) -> ProtectedFeature {
        self.feature
    }

    pub fn groups(&self) -> &[(Group, Vec<usize>)] {
        &self.groups
    }

    pub fn members(&self, group: Group) -> Option<&[usize]> {
        self.groups
            .iter()
            .find(|(g, _)| *g == group)
            .map(|(_, idx)| idx.as_slice())
    }

    /// Number of records covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Slot (position in `groups()`) of every record.
    pub fn slots(&self) -> Vec<usize> {
        let mut slots = alloc::vec![usize::MAX; self.len];
        for (slot, (_, idx)) in self.groups.iter().enumerate() {
            for &i in idx {
                slots[i] = slot;
            }
        }
        slots
    }
}

pub fn subgroup_partition(cohort: &Cohort, feature: ProtectedFeature) -> SubgroupPartition {
    let assignments: Vec<Group> = cohort.records().iter().map(|r| r.group(feature)).collect();
    SubgroupPartition::from_assignments(feature, &assignments)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn senior_boundary_is_inclusive() {
        let c = cohort_with_ages(&[30, 62, 70]);
        let p = subgroup_partition(&c, ProtectedFeature::Senior);
        assert_eq!(p.members(Group::NonSenior).unwrap(), &[0]);
        assert_eq!(p.members(Group::Senior).unwrap(), &[1, 2]);
    }

    #[test]
    fn all_female_cohort_has_empty_male_group() {
        let c = cohort_with_ages(&[20, 40, 80]);
        let p = subgroup_partition(&c, ProtectedFeature::Sex);
        assert_eq!(p.members(Group::Female).unwrap(), &[0, 1, 2]);
        assert!(p.members(Group::Male).unwrap().is_empty());
    }

    #[test]
    fn race_partition_is_disjoint_and_exhaustive() {
        let records = (0..7)
            .map(|i| {
                let race = if i % 3 == 0 {
                    RaceGroup::White
                } else {
                    RaceGroup::NonWhite
                };
                record(i, Sex::Male, race, 40, vec![1.0])
            })
            .collect();
        let c = Cohort::new(records, vec!["f1".into()], Provenance::Loaded).unwrap();
        let p = subgroup_partition(&c, ProtectedFeature::Race);
        let mut all: Vec<usize> = p.groups().iter().flat_map(|(_, i)| i.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        assert_eq!(p.members(Group::White).unwrap(), &[0, 3, 6]);
    }

    #[test]
    fn unknown_feature_name_is_rejected() {
        assert!(matches!(
            "ethnicity".parse::<ProtectedFeature>(),
            Err(CohortError::UnknownName { .. })
        ));
        assert_eq!(
            "senior".parse::<ProtectedFeature>().unwrap(),
            ProtectedFeature::Senior
        );
    }

    #[test]
    fn cohort_validation() {
        assert_eq!(
            Cohort::new(vec![], vec![], Provenance::Loaded).unwrap_err(),
            CohortError::Empty
        );
        let bad = vec![
            record(0, Sex::Male, RaceGroup::White, 1, vec![1.0]),
            record(1, Sex::Male, RaceGroup::White, 1, vec![1.0, 2.0]),
        ];
        assert!(matches!(
            Cohort::new(bad, vec!["a".into()], Provenance::Loaded),
            Err(CohortError::FeatureLength { index: 1, .. })
        ));
        let dup = vec![
            record(0, Sex::Male, RaceGroup::White, 1, vec![]),
            record(0, Sex::Male, RaceGroup::White, 1, vec![]),
        ];
        assert!(matches!(
            Cohort::new(dup.clone(), vec![], Provenance::Loaded),
            Err(CohortError::DuplicateId(_))
        ));
        let resampled = Provenance::Resampled {
            seed: 1,
            parent_digest: 2,
        };
        assert!(Cohort::new(dup, vec![], resampled).is_ok());
    }

    #[test]
    fn digest_tracks_content() {
        let a = cohort_with_ages(&[30, 40]);
        let b = cohort_with_ages(&[30, 41]);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), cohort_with_ages(&[30, 40]).digest());
    }
}
