//! Semi-supervised GAN toolkit for encrypted traffic classification.
//!
//! The pipeline turns packet captures into fixed-length Packet Byte
//! Vectors ([`pbv`]), splits them into labeled, unlabeled and held-out
//! pools ([`dataset`]), trains a K-class discriminator jointly with a
//! feature-matching generator or a supervised CNN baseline
//! ([`models`], [`losses`], [`training`]) and scores the result
//! ([`eval`]).

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod losses;
pub mod models;
pub mod nn;
pub mod pbv;
pub mod rng;
pub mod training;
mod wire;

pub use error::{Error, Result};
