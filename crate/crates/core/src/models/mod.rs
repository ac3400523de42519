//! Generator, K-class discriminator and CNN baseline.
//!
//! Each network is a configuration (shapes and widths) plus a
//! [`ParamSet`]. Forward passes return a trace holding every activation
//! the matching backward pass needs. Configurations come in a full-size
//! variant and a miniature one that exercises the same code on tiny
//! shapes.

mod cnn;
mod discriminator;
mod generator;

pub use cnn::{Cnn, CnnConfig, CnnTrace};
pub(crate) use discriminator::argmax;
pub use discriminator::{Discriminator, DiscriminatorConfig, DiscriminatorOutput, DiscriminatorTrace};
pub use generator::{Generator, GeneratorConfig, GeneratorTrace};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::{ParamSet, Scalar};
use crate::rng::stream;

pub const INIT_STD: f64 = 0.02;
pub const LEAK: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Generator,
    Discriminator,
    Cnn,
}

impl Architecture {
    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Generator => "generator",
            Architecture::Discriminator => "discriminator",
            Architecture::Cnn => "cnn",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Architecture::Generator => 0x6e,
            Architecture::Discriminator => 0xd1,
            Architecture::Cnn => 0xc0,
        }
    }
}

/// Hex SHA-256 over the architecture tag and the canonical JSON of its
/// configuration.
pub(crate) fn fingerprint<C: Serialize>(arch: Architecture, cfg: &C) -> String {
    let mut h = Sha256::new();
    h.update(arch.tag().as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    hex::encode(h.finalize())
}

/// Weights ~ N(0, 0.02), biases zero. Parameters named `*.b` are biases.
pub(crate) fn init_layout<T: Scalar>(arch: Architecture, layout: &[(&'static str, Vec<usize>)], seed: u64) -> ParamSet<T> {
    let mut p = ParamSet::zeros(layout);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    for (i, e) in p.entries.iter_mut().enumerate() {
        if e.name.ends_with(".b") {
            continue;
        }
        let mut rng = stream(seed, &[arch.stream_id(), i as u64]);
        for v in &mut e.data {
            *v = T::from_f64(normal.sample(&mut rng));
        }
    }
    p
}

/// Parameters of `arch` at full size for a schema of `num_classes`.
pub fn init_params(arch: Architecture, num_classes: usize, seed: u64) -> ParamSet<f32> {
    match arch {
        Architecture::Generator => Generator::<f32>::init(GeneratorConfig::standard(), seed).params,
        Architecture::Discriminator => Discriminator::<f32>::init(DiscriminatorConfig::standard(num_classes), seed).params,
        Architecture::Cnn => Cnn::<f32>::init(CnnConfig::standard(num_classes), seed).params,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePrior {
    /// i.i.d. uniform on [-1, 1].
    #[default]
    Uniform,
    /// i.i.d. standard normal.
    Gaussian,
}

/// A single latent input for the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector {
    values: Vec<f32>,
}

impl NoiseVector {
    pub fn sample<R: Rng + ?Sized>(prior: NoisePrior, dim: usize, rng: &mut R) -> Self {
        let mut values = vec![0.0; dim];
        fill_noise(prior, &mut values, rng);
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

pub fn fill_noise<T: Scalar, R: Rng + ?Sized>(prior: NoisePrior, out: &mut [T], rng: &mut R) {
    match prior {
        NoisePrior::Uniform => {
            for v in out {
                *v = T::from_f64(rng.random_range(-1.0..=1.0));
            }
        }
        NoisePrior::Gaussian => {
            for v in out {
                *v = T::from_f64(rng.sample::<f64, _>(rand_distr::StandardNormal));
            }
        }
    }
}

pub(crate) fn check_finite<T: Scalar>(x: &[T], what: &str) -> crate::Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(crate::Error::Contract(format!("{what}: non-finite value at index {i}"))),
    }
}
