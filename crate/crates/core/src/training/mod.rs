//! Seeded training loops for the GAN pair and the CNN baseline.
//!
//! A step splits its batch into fixed micro-batches. Each micro-batch
//! produces gradients into its own buffer and the buffers are summed in
//! micro-batch order, so the parameter trajectory is the same whether the
//! micro-batches run in parallel or one after another.

mod cnn;
mod log;
mod optim;
mod sgan;

pub use cnn::{train_cnn, CnnOutcome, CnnTrainConfig};
pub use log::{EpochRecord, LogRecord, StepRecord, TrainLog};
pub use optim::{adam_step, adam_step_in_place, rmsprop_step_in_place, AdamConfig, AdamState, RmsPropConfig, RmsPropState};
pub use sgan::{sgan_noise, train_sgan, DiscriminatorLosses, SganOutcome, SganTrainConfig, SganTrainer, StepBatch};

use crate::dataset::epoch_order;
use crate::error::Result;
use crate::exec::Exec;
use crate::models::{Cnn, Discriminator, Generator};
use crate::dataset::LabeledPool;
use crate::nn::{ParamSet, Scalar};

/// Why a snapshot is being handed to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    /// End of the given (zero-based) epoch, at the configured cadence.
    Periodic { epoch: u64 },
    /// Parameters at the point a non-finite value was detected.
    Diagnostic { step: u64 },
}

/// Borrowed model state handed to checkpoint sinks.
#[derive(Debug, Clone, Copy)]
pub enum Snapshot<'a> {
    Sgan {
        discriminator: &'a Discriminator<f32>,
        generator: &'a Generator<f32>,
    },
    Cnn(&'a Cnn<f32>),
}

pub type CheckpointSink<'a> = &'a mut dyn FnMut(SnapshotKind, Snapshot<'_>) -> Result<()>;

/// Execution hooks shared by both training loops.
#[derive(Default)]
pub struct TrainOptions<'a> {
    pub exec: Exec,
    /// Scored at the end of every epoch when given.
    pub heldout: Option<&'a LabeledPool>,
    pub sink: Option<CheckpointSink<'a>>,
}

/// Endless stream of pool members drawn from successive shuffles.
pub(crate) struct Cycler {
    len: usize,
    seed: u64,
    round: u64,
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    pub(crate) fn new(len: usize, seed: u64) -> Self {
        Self {
            len,
            seed,
            round: 0,
            order: epoch_order(len, seed, 0),
            pos: 0,
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.len {
                self.round += 1;
                self.order = epoch_order(self.len, self.seed, self.round);
                self.pos = 0;
            }
            let k = (n - out.len()).min(self.len - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + k]);
            self.pos += k;
        }
        out
    }
}

/// Runs `f` on every job with a fresh zeroed gradient buffer and sums the
/// buffers (and the returned statistics) in job order. At most
/// `exec.width()` buffers are alive at once.
pub(crate) fn accumulate<T, J, const S: usize>(
    exec: Exec,
    jobs: &[J],
    layout: &ParamSet<T>,
    f: impl Fn(&J, &mut ParamSet<T>) -> [f64; S] + Sync + Send,
) -> (ParamSet<T>, [f64; S])
where
    T: Scalar,
    J: Sync,
{
    let mut total = layout.zeros_like();
    let mut stats = [0.0; S];
    for wave in jobs.chunks(exec.width().max(1)) {
        let outs = exec.map(wave.len(), |i| {
            let mut g = layout.zeros_like();
            let s = f(&wave[i], &mut g);
            (g, s)
        });
        for (g, s) in outs {
            total.add_assign(&g);
            for (a, b) in stats.iter_mut().zip(s) {
                *a += b;
            }
        }
    }
    (total, stats)
}

pub(crate) fn to_f64<T: Scalar>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.to_f64()).collect()
}

pub(crate) fn from_f64<T: Scalar>(x: &[f64], scale: f64) -> Vec<T> {
    x.iter().map(|&v| T::from_f64(v * scale)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycler_covers_every_member_per_round() {
        let mut c = Cycler::new(5, 9);
        let mut a = c.take(3);
        a.extend(c.take(2));
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.take(7).len(), 7);
    }
}
