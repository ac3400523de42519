//! Packet byte datasets, experiment splits and seeded mini-batches.

mod format;
mod split;

pub use format::UNLABELED;
pub use split::{make_splits, Splits, SplitSpec, UnlabeledCount};

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pbv::{normalize_octet, PacketByteVector, PBV_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassSchema {
    names: Vec<String>,
}

impl ClassSchema {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::Config(format!("a class schema needs at least 2 classes, got {}", names.len())));
        }
        if names.len() >= UNLABELED as usize {
            return Err(Error::Config("too many classes".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::Config(format!("class {i} has an empty name")));
            }
            if n.len() > u16::MAX as usize {
                return Err(Error::Config(format!("class name {i} is too long")));
            }
            if names[..i].contains(n) {
                return Err(Error::Config(format!("duplicate class name `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<u16> {
        self.names.iter().position(|n| n == name).map(|i| i as u16)
    }

    pub fn name(&self, index: u16) -> &str {
        &self.names[index as usize]
    }
}

impl TryFrom<Vec<String>> for ClassSchema {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassSchema> for Vec<String> {
    fn from(s: ClassSchema) -> Self {
        s.names
    }
}

/// Samples are kept as raw octets; normalization happens on access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficDataset {
    schema: ClassSchema,
    labels: Vec<Option<u16>>,
    octets: Vec<u8>,
}

impl TrafficDataset {
    pub fn new(schema: ClassSchema) -> Self {
        Self::with_capacity(schema, 0)
    }

    pub fn with_capacity(schema: ClassSchema, n: usize) -> Self {
        Self {
            schema,
            labels: Vec::with_capacity(n),
            octets: Vec::with_capacity(n * PBV_LEN),
        }
    }

    pub fn push(&mut self, label: Option<u16>, octets: &[u8; PBV_LEN]) -> Result<()> {
        if let Some(l) = label {
            if l as usize >= self.schema.len() {
                return Err(Error::Contract(format!("label {l} outside a {}-class schema", self.schema.len())));
            }
        }
        self.labels.push(label);
        self.octets.extend_from_slice(octets);
        Ok(())
    }

    pub fn schema(&self) -> &ClassSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<u16> {
        self.labels[i]
    }

    pub fn octets(&self, i: usize) -> &[u8] {
        &self.octets[i * PBV_LEN..(i + 1) * PBV_LEN]
    }

    pub fn vector(&self, i: usize) -> PacketByteVector {
        PacketByteVector::from_octets(self.octets(i).try_into().unwrap())
    }

    pub(crate) fn fill_row(&self, i: usize, out: &mut [f32]) {
        for (o, &b) in out.iter_mut().zip(self.octets(i)) {
            *o = normalize_octet(b);
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.schema.len()];
        for l in self.labels.iter().flatten() {
            c[*l as usize] += 1;
        }
        c
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8], context: &str) -> Result<Self> {
        format::decode(bytes, context)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the serialized form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TrafficDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TrafficDataset::from_bytes(&bytes, &path.display().to_string())
}

/// Index of a sample in its dataset; datasets are written in input order
/// then packet order, so this pins (source file, packet ordinal).
pub type SampleId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    Labeled,
    Unlabeled,
    Generated,
}

/// A set of dataset samples a training or evaluation pass iterates over.
pub trait SamplePool: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn ids(&self) -> &[SampleId];
    fn kind(&self) -> BatchKind;
    /// Writes the normalized vector of the `i`-th member into `out`.
    fn fill(&self, i: usize, out: &mut [f32]);
    /// Label of the `i`-th member; always `None` for unlabeled pools.
    fn member_label(&self, i: usize) -> Option<u16>;
}

#[derive(Debug, Clone)]
pub struct LabeledPool {
    data: Arc<TrafficDataset>,
    ids: Vec<SampleId>,
    labels: Vec<u16>,
}

impl LabeledPool {
    pub(crate) fn new(data: Arc<TrafficDataset>, ids: Vec<SampleId>) -> Self {
        let labels = ids.iter().map(|&i| data.label(i).expect("labeled member")).collect();
        Self { data, ids, labels }
    }

    /// Every labeled sample of `data`.
    pub fn all(data: Arc<TrafficDataset>) -> Self {
        let ids = (0..data.len()).filter(|&i| data.label(i).is_some()).collect();
        Self::new(data, ids)
    }

    pub fn schema(&self) -> &ClassSchema {
        self.data.schema()
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.schema().len()];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }
}

impl SamplePool for LabeledPool {
    fn len(&self) -> usize {
        self.ids.len()
    }
    fn ids(&self) -> &[SampleId] {
        &self.ids
    }
    fn kind(&self) -> BatchKind {
        BatchKind::Labeled
    }
    fn fill(&self, i: usize, out: &mut [f32]) {
        self.data.fill_row(self.ids[i], out)
    }
    fn member_label(&self, i: usize) -> Option<u16> {
        Some(self.labels[i])
    }
}

/// Samples with their labels erased. Holds the dataset privately and never
/// hands out a label.
#[derive(Debug, Clone)]
pub struct UnlabeledPool {
    data: Arc<TrafficDataset>,
    ids: Vec<SampleId>,
}

impl UnlabeledPool {
    pub(crate) fn new(data: Arc<TrafficDataset>, ids: Vec<SampleId>) -> Self {
        Self { data, ids }
    }

    pub fn empty(data: Arc<TrafficDataset>) -> Self {
        Self { data, ids: Vec::new() }
    }

    pub fn schema(&self) -> &ClassSchema {
        self.data.schema()
    }
}

impl SamplePool for UnlabeledPool {
    fn len(&self) -> usize {
        self.ids.len()
    }
    fn ids(&self) -> &[SampleId] {
        &self.ids
    }
    fn kind(&self) -> BatchKind {
        BatchKind::Unlabeled
    }
    fn fill(&self, i: usize, out: &mut [f32]) {
        self.data.fill_row(self.ids[i], out)
    }
    fn member_label(&self, _i: usize) -> Option<u16> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Row-major `len() x PBV_LEN`.
    pub vectors: Vec<f32>,
    pub labels: Vec<Option<u16>>,
    pub ids: Vec<SampleId>,
    pub kind: BatchKind,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Class indices of a labeled batch.
    pub fn class_labels(&self) -> Vec<u16> {
        self.labels.iter().map(|l| l.expect("labeled batch")).collect()
    }
}

pub(crate) fn gather<P: SamplePool + ?Sized>(pool: &P, members: &[usize]) -> Batch {
    let mut vectors = vec![0f32; members.len() * PBV_LEN];
    for (row, &m) in vectors.chunks_exact_mut(PBV_LEN).zip(members) {
        pool.fill(m, row);
    }
    Batch {
        vectors,
        labels: members.iter().map(|&m| pool.member_label(m)).collect(),
        ids: members.iter().map(|&m| pool.ids()[m]).collect(),
        kind: pool.kind(),
    }
}

/// One epoch of shuffled mini-batches; the order is a pure function of
/// `(seed, epoch)`.
pub struct Batches<'a, P: SamplePool + ?Sized> {
    pool: &'a P,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut crate::rng::stream(seed, &[0xBA7C, epoch]));
    order
}

pub fn batches<P: SamplePool + ?Sized>(pool: &P, batch_size: usize, seed: u64, epoch: u64) -> Batches<'_, P> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    Batches {
        pool,
        order: epoch_order(pool.len(), seed, epoch),
        batch_size,
        next: 0,
    }
}

impl<P: SamplePool + ?Sized> Batches<'_, P> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl<P: SamplePool + ?Sized> Iterator for Batches<'_, P> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let b = gather(self.pool, &self.order[self.next..end]);
        self.next = end;
        Some(b)
    }
}
