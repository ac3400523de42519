//! BSGM model container.
//!
//! Layout (little-endian): `"BSGM"`, version u16, architecture tag,
//! fingerprint and schema names as u16-length UTF-8 strings (the schema
//! preceded by a u16 count), the architecture configuration as u32-length
//! JSON, then per network a u32 array count followed by each array's name,
//! u8 rank, u32 dimensions and f32 values in declared order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::ClassSchema;
use crate::error::{Error, Result};
use crate::eval::Classifier;
use crate::models::{Cnn, CnnConfig, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::nn::ParamSet;
use crate::training::Snapshot;
use crate::wire::{put_str16, Cursor};

pub const MAGIC: &[u8; 4] = b"BSGM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Sgan {
        discriminator: Discriminator<f32>,
        generator: Generator<f32>,
    },
    Cnn(Cnn<f32>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SganArch {
    discriminator: DiscriminatorConfig,
    generator: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema: ClassSchema,
    pub model: Model,
}

fn sgan_fingerprint(d: &DiscriminatorConfig, g: &GeneratorConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"sgan\0");
    h.update(d.fingerprint().as_bytes());
    h.update(g.fingerprint().as_bytes());
    hex::encode(h.finalize())
}

fn put_params(out: &mut Vec<u8>, p: &ParamSet<f32>) {
    out.extend_from_slice(&(p.len() as u32).to_le_bytes());
    for e in &p.entries {
        put_str16(out, e.name);
        out.push(e.shape.len() as u8);
        for &d in &e.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_params(c: &mut Cursor<'_>, layout: &[(&'static str, Vec<usize>)], what: &str) -> Result<ParamSet<f32>> {
    let count = c.u32("array count")? as usize;
    if count != layout.len() {
        return Err(Error::format(c.context, format!("{what}: {count} arrays, expected {}", layout.len())));
    }
    let mut p = ParamSet::zeros(layout);
    for e in &mut p.entries {
        let name = c.str16("array name")?;
        let rank = c.u8("array rank")? as usize;
        let shape = (0..rank).map(|_| c.u32("array dimension").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != e.name || shape != e.shape {
            return Err(Error::format(c.context, format!("{what}: array `{name}` {shape:?} where `{}` {:?} was expected", e.name, e.shape)));
        }
        let raw = c.take(e.data.len() * 4, "array values")?;
        for (v, b) in e.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    Ok(p)
}

impl Checkpoint {
    pub fn from_snapshot(schema: ClassSchema, snapshot: Snapshot<'_>) -> Self {
        let model = match snapshot {
            Snapshot::Sgan { discriminator, generator } => Model::Sgan {
                discriminator: discriminator.clone(),
                generator: generator.clone(),
            },
            Snapshot::Cnn(c) => Model::Cnn(c.clone()),
        };
        Self { schema, model }
    }

    pub fn arch_tag(&self) -> &'static str {
        match self.model {
            Model::Sgan { .. } => "sgan",
            Model::Cnn(_) => "cnn",
        }
    }

    pub fn fingerprint(&self) -> String {
        match &self.model {
            Model::Sgan { discriminator, generator } => sgan_fingerprint(&discriminator.config, &generator.config),
            Model::Cnn(c) => c.config.fingerprint(),
        }
    }

    pub fn classifier(&self) -> Classifier<'_> {
        match &self.model {
            Model::Sgan { discriminator, .. } => Classifier::Discriminator(discriminator),
            Model::Cnn(c) => Classifier::Cnn(c),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str16(&mut out, self.arch_tag());
        put_str16(&mut out, &self.fingerprint());
        out.extend_from_slice(&(self.schema.len() as u16).to_le_bytes());
        for n in self.schema.names() {
            put_str16(&mut out, n);
        }
        let config = match &self.model {
            Model::Sgan { discriminator, generator } => serde_json::to_vec(&SganArch {
                discriminator: discriminator.config.clone(),
                generator: generator.config.clone(),
            }),
            Model::Cnn(c) => serde_json::to_vec(&c.config),
        }
        .expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        match &self.model {
            Model::Sgan { discriminator, generator } => {
                put_params(&mut out, &discriminator.params);
                put_params(&mut out, &generator.params);
            }
            Model::Cnn(c) => put_params(&mut out, &c.params),
        }
        out
    }

    pub fn from_bytes(buf: &[u8], context: &str) -> Result<Self> {
        let mut c = Cursor::new(buf, context);
        if c.take(4, "magic")? != MAGIC {
            return Err(Error::format(context, "missing BSGM magic"));
        }
        let version = c.u16("version")?;
        if version != VERSION {
            return Err(Error::format(context, format!("unsupported version {version}, expected {VERSION}")));
        }
        let tag = c.str16("architecture tag")?.to_owned();
        let stored = c.str16("fingerprint")?.to_owned();
        let n = c.u16("class count")? as usize;
        let names = (0..n).map(|_| c.str16("class name").map(str::to_owned)).collect::<Result<Vec<_>>>()?;
        let schema = ClassSchema::new(names).map_err(|e| Error::format(context, e.to_string()))?;
        let len = c.u32("config length")? as usize;
        let config = c.take(len, "config")?;
        let bad_config = |e: serde_json::Error| Error::format(context, format!("config: {e}"));
        let model = match tag.as_str() {
            "sgan" => {
                let arch: SganArch = serde_json::from_slice(config).map_err(bad_config)?;
                check_fingerprint(context, &stored, &sgan_fingerprint(&arch.discriminator, &arch.generator))?;
                check_classes(context, arch.discriminator.num_classes, &schema)?;
                let dp = read_params(&mut c, &arch.discriminator.layout(), "discriminator")?;
                let gp = read_params(&mut c, &arch.generator.layout(), "generator")?;
                Model::Sgan {
                    discriminator: Discriminator::from_params(arch.discriminator, dp)?,
                    generator: Generator::from_params(arch.generator, gp)?,
                }
            }
            "cnn" => {
                let cfg: CnnConfig = serde_json::from_slice(config).map_err(bad_config)?;
                check_fingerprint(context, &stored, &cfg.fingerprint())?;
                check_classes(context, cfg.num_classes, &schema)?;
                let p = read_params(&mut c, &cfg.layout(), "cnn")?;
                Model::Cnn(Cnn::from_params(cfg, p)?)
            }
            other => return Err(Error::format(context, format!("unknown architecture tag `{other}`"))),
        };
        if c.remaining() != 0 {
            return Err(Error::format(context, format!("{} trailing bytes", c.remaining())));
        }
        Ok(Self { schema, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn check_fingerprint(context: &str, stored: &str, actual: &str) -> Result<()> {
    if stored == actual {
        Ok(())
    } else {
        Err(Error::format(context, format!("fingerprint mismatch: stored {stored}, configuration hashes to {actual}")))
    }
}

fn check_classes(context: &str, k: usize, schema: &ClassSchema) -> Result<()> {
    if k == schema.len() {
        Ok(())
    } else {
        Err(Error::format(context, format!("model has {k} outputs but the schema names {} classes", schema.len())))
    }
}
