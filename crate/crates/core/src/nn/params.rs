use sha2::{Digest, Sha256};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of named parameter arrays. Gradients and optimizer
/// moments share the layout of the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros(layout: &[(&'static str, Vec<usize>)]) -> Self {
        Self {
            entries: layout
                .iter()
                .map(|(name, shape)| ParamEntry {
                    name,
                    shape: shape.clone(),
                    data: vec![T::ZERO; shape.iter().product()],
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name,
                    shape: e.shape.clone(),
                    data: vec![T::ZERO; e.data.len()],
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn get(&self, i: usize) -> &[T] {
        &self.entries[i].data
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.entries[i].data
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape && a.data.len() == b.data.len())
    }

    pub fn check_layout(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Contract(format!("{what}: parameter layouts differ")))
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for e in &mut self.entries {
            for x in &mut e.data {
                *x *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.data.iter().all(|v| v.is_finite()))
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.entries.iter().flat_map(|e| e.data.iter().copied())
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_values() * T::BYTES);
        for v in self.values() {
            v.write_le(&mut out);
        }
        out
    }

    /// Hex SHA-256 over the little-endian values in declared order.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_le_bytes()))
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name,
                    shape: e.shape.clone(),
                    data: e.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }
}
