use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{LabeledPool, SampleId, TrafficDataset, UnlabeledPool};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnlabeledCount {
    /// Everything left after the test and labeled draws, plus any samples
    /// the dataset stores without a label.
    All,
    PerClass(usize),
}

impl Serialize for UnlabeledCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            UnlabeledCount::All => s.serialize_str("all"),
            UnlabeledCount::PerClass(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for UnlabeledCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(UnlabeledCount::PerClass(n)),
            Raw::S(s) if s == "all" => Ok(UnlabeledCount::All),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected a count or \"all\", got \"{s}\""))),
        }
    }
}

impl fmt::Display for UnlabeledCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnlabeledCount::All => f.write_str("all"),
            UnlabeledCount::PerClass(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub labeled_per_class: usize,
    pub unlabeled_per_class: UnlabeledCount,
    /// Stratified fraction of each class held out for testing before any
    /// training draw.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            labeled_per_class: 1000,
            unlabeled_per_class: UnlabeledCount::All,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.labeled_per_class < 1 {
            return Err(Error::Config("labeled_per_class must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction {} is outside (0, 1)", self.test_fraction)));
        }
        Ok(())
    }

    fn test_count(&self, class_size: usize) -> usize {
        ((class_size as f64 * self.test_fraction).round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub labeled: LabeledPool,
    pub unlabeled: UnlabeledPool,
    pub test: LabeledPool,
}

/// Stratified test hold-out, then per-class labeled and unlabeled draws.
pub fn make_splits(data: Arc<TrafficDataset>, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let schema = data.schema().clone();
    let mut per_class: Vec<Vec<SampleId>> = vec![Vec::new(); schema.len()];
    let mut unlabeled_extra = Vec::new();
    for i in 0..data.len() {
        match data.label(i) {
            Some(l) => per_class[l as usize].push(i),
            None => unlabeled_extra.push(i),
        }
    }

    let (mut labeled, mut unlabeled, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, members) in per_class.iter_mut().enumerate() {
        let n = members.len();
        let n_test = spec.test_count(n);
        let n_unlabeled = match spec.unlabeled_per_class {
            UnlabeledCount::All => 0,
            UnlabeledCount::PerClass(u) => u,
        };
        let required = n_test + spec.labeled_per_class + n_unlabeled;
        if n < required {
            return Err(Error::Capacity {
                class: schema.name(c as u16).to_owned(),
                available: n,
                required,
            });
        }
        members.shuffle(&mut crate::rng::stream(spec.seed, &[0x5011, c as u64]));
        let (t, rest) = members.split_at(n_test);
        let (l, rest) = rest.split_at(spec.labeled_per_class);
        let u = match spec.unlabeled_per_class {
            UnlabeledCount::All => rest,
            UnlabeledCount::PerClass(k) => &rest[..k],
        };
        test.extend_from_slice(t);
        labeled.extend_from_slice(l);
        unlabeled.extend_from_slice(u);
    }
    if spec.unlabeled_per_class == UnlabeledCount::All {
        unlabeled.extend(unlabeled_extra);
    }

    Ok(Splits {
        labeled: LabeledPool::new(data.clone(), labeled),
        unlabeled: UnlabeledPool::new(data.clone(), unlabeled),
        test: LabeledPool::new(data, test),
    })
}
