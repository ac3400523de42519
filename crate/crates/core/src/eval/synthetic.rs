//! Desk-scale stand-in for a captured traffic corpus.
//!
//! Every class owns a header motif, a payload byte alphabet and a typical
//! datagram length. Each class is split into modes that share the
//! motif only partially, and every sample is corrupted by byte noise, so
//! the classes are separable but not trivially so.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassSchema, TrafficDataset};
use crate::error::{Error, Result};
use crate::pbv::PBV_LEN;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Variants of the class motif.
    pub modes_per_class: usize,
    pub motif_len: usize,
    /// Fraction of motif positions a mode redraws.
    pub mode_divergence: f64,
    /// Per-byte probability that a motif byte is replaced by noise.
    pub motif_noise: f64,
    /// Largest random offset of the motif from the start of the datagram.
    pub max_shift: usize,
    pub alphabet_size: usize,
    /// Probability that a payload byte comes from the class alphabet.
    pub alphabet_weight: f64,
    /// Datagram lengths are drawn within this many bytes of the class
    /// length.
    pub length_jitter: usize,
    /// When positive, classes share their typical length in this many
    /// groups (class `c` in group `c % length_groups`); 0 gives every
    /// class its own length.
    pub length_groups: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 7,
            per_class: 1000,
            seed: 0,
            modes_per_class: 4,
            motif_len: 48,
            mode_divergence: 0.5,
            motif_noise: 0.1,
            max_shift: 0,
            alphabet_size: 24,
            alphabet_weight: 0.3,
            length_jitter: 200,
            length_groups: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!("synthetic data needs at least 2 classes, got {}", self.n_classes)));
        }
        if self.modes_per_class == 0 || self.alphabet_size == 0 || self.alphabet_size > 256 {
            return Err(Error::Config("modes_per_class and alphabet_size (<= 256) must be positive".into()));
        }
        if self.motif_len + self.max_shift > PBV_LEN / 2 {
            return Err(Error::Config("motif plus shift must fit in the first half of the vector".into()));
        }
        for (name, p) in [("mode_divergence", self.mode_divergence), ("motif_noise", self.motif_noise), ("alphabet_weight", self.alphabet_weight)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// The structure one class is sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTemplate {
    pub modes: Vec<Vec<u8>>,
    pub alphabet: Vec<u8>,
    pub length: usize,
}

fn class_template(spec: &SyntheticSpec, c: usize) -> ClassTemplate {
    // the class structure depends on the seed too, so seeds give different
    // corpora over the same schema
    let mut rng = stream(spec.seed, &[0x5C1A55, c as u64]);
    let base: Vec<u8> = (0..spec.motif_len).map(|_| rng.random()).collect();
    let modes = (0..spec.modes_per_class)
        .map(|_| base.iter().map(|&b| if rng.random_bool(spec.mode_divergence) { rng.random() } else { b }).collect())
        .collect();
    let all: Vec<u8> = (0..=255).collect();
    let alphabet = all.choose_multiple(&mut rng, spec.alphabet_size).copied().collect();
    let lo = spec.motif_len + spec.max_shift + spec.length_jitter;
    let length = if spec.length_groups > 0 {
        stream(spec.seed, &[0x1E46, (c % spec.length_groups) as u64]).random_range(lo..=PBV_LEN.max(lo))
    } else {
        rng.random_range(lo..=PBV_LEN.max(lo))
    };
    ClassTemplate { modes, alphabet, length }
}

fn sample<R: Rng>(spec: &SyntheticSpec, m: &ClassTemplate, rng: &mut R) -> [u8; PBV_LEN] {
    let mut o = [0u8; PBV_LEN];
    let jitter = spec.length_jitter as i64;
    let len = (m.length as i64 + rng.random_range(-jitter..=jitter)).clamp((spec.motif_len + spec.max_shift) as i64, PBV_LEN as i64) as usize;
    for b in &mut o[..len] {
        *b = if rng.random_bool(spec.alphabet_weight) { *m.alphabet.choose(rng).unwrap() } else { rng.random() };
    }
    let shift = rng.random_range(0..=spec.max_shift);
    let motif = m.modes.choose(rng).unwrap();
    for (dst, &b) in o[shift..shift + spec.motif_len].iter_mut().zip(motif) {
        *dst = if rng.random_bool(spec.motif_noise) { rng.random() } else { b };
    }
    o
}

pub fn make_synthetic_dataset_with(spec: &SyntheticSpec) -> Result<TrafficDataset> {
    spec.validate()?;
    let names = (0..spec.n_classes).map(|c| format!("class{c:02}")).collect();
    let mut ds = TrafficDataset::with_capacity(ClassSchema::new(names)?, spec.n_classes * spec.per_class);
    for c in 0..spec.n_classes {
        let model = class_template(spec, c);
        let mut rng = stream(spec.seed, &[0x5A3B1E, c as u64]);
        for _ in 0..spec.per_class {
            ds.push(Some(c as u16), &sample(spec, &model, &mut rng))?;
        }
    }
    Ok(ds)
}

/// Templates of every class, in class order.
pub fn class_templates(spec: &SyntheticSpec) -> Result<Vec<ClassTemplate>> {
    spec.validate()?;
    Ok((0..spec.n_classes).map(|c| class_template(spec, c)).collect())
}

/// Classifies by the best motif match over every mode and allowed shift,
/// breaking ties by distance to the class length. Knows the generating
/// templates, so it bounds what a learned model can reach.
pub fn nearest_template(spec: &SyntheticSpec, templates: &[ClassTemplate], octets: &[u8]) -> usize {
    let used = octets.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
    let score = |t: &ClassTemplate| {
        let matches = (0..=spec.max_shift)
            .flat_map(|s| t.modes.iter().map(move |m| m.iter().zip(&octets[s..]).filter(|(a, b)| a == b).count()))
            .max()
            .unwrap_or(0);
        (matches, std::cmp::Reverse(used.abs_diff(t.length)))
    };
    (0..templates.len()).max_by_key(|&c| score(&templates[c])).unwrap_or(0)
}

/// Synthetic corpus with default structure parameters.
pub fn make_synthetic_dataset(n_classes: usize, per_class: usize, seed: u64) -> Result<TrafficDataset> {
    make_synthetic_dataset_with(&SyntheticSpec {
        n_classes,
        per_class,
        seed,
        ..SyntheticSpec::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_accuracy(spec: &SyntheticSpec) -> f64 {
        let ds = make_synthetic_dataset_with(spec).unwrap();
        let t = class_templates(spec).unwrap();
        let hits = (0..ds.len()).filter(|&i| nearest_template(spec, &t, ds.octets(i)) == ds.label(i).unwrap() as usize).count();
        hits as f64 / ds.len() as f64
    }

    #[test]
    fn construction() {
        let ds = make_synthetic_dataset(7, 1000, 3).unwrap();
        assert_eq!(ds.len(), 7000);
        assert_eq!(ds.schema().len(), 7);
        let other = make_synthetic_dataset(7, 1000, 4).unwrap();
        assert_eq!(other.schema(), ds.schema());
        assert_ne!(other.digest(), ds.digest());
    }

    #[test]
    fn nearest_template_is_near_perfect() {
        let acc = oracle_accuracy(&SyntheticSpec { per_class: 1000, seed: 3, ..SyntheticSpec::default() });
        assert!(acc >= 0.99, "oracle accuracy {acc}");
        let shifted = SyntheticSpec { per_class: 300, max_shift: 16, ..SyntheticSpec::default() };
        assert!(oracle_accuracy(&shifted) >= 0.99);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(make_synthetic_dataset(1, 10, 0).is_err());
        assert!(make_synthetic_dataset_with(&SyntheticSpec { motif_noise: 1.5, ..SyntheticSpec::default() }).is_err());
        assert!(make_synthetic_dataset_with(&SyntheticSpec { max_shift: 900, ..SyntheticSpec::default() }).is_err());
    }
}
