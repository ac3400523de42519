use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{accumulate, from_f64, to_f64, EpochRecord, LogRecord, RmsPropConfig, RmsPropState, Snapshot, SnapshotKind, StepRecord, TrainLog, TrainOptions};
use crate::dataset::{batches, ClassSchema, LabeledPool, SamplePool};
use crate::error::{Error, Result};
use crate::eval::{accuracy_of, predict_classes, Classifier};
use crate::losses::cnn_loss_from_logits;
use crate::models::{Cnn, CnnConfig};
use crate::pbv::PBV_LEN;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnTrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub epochs: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub max_steps: Option<u64>,
    pub micro_batch: usize,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        let r = RmsPropConfig::default();
        Self {
            batch_size: 128,
            learning_rate: r.learning_rate,
            rho: r.rho,
            epsilon: r.epsilon,
            epochs: 30,
            seed: 0,
            checkpoint_every: 0,
            max_steps: None,
            micro_batch: 8,
        }
    }
}

impl CnnTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon <= 0.0 {
            return Err(Error::Config("rho must lie in [0, 1) and epsilon must be positive".into()));
        }
        if self.micro_batch == 0 {
            return Err(Error::Config("micro_batch must be positive".into()));
        }
        Ok(())
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CnnOutcome {
    pub cnn: Cnn<f32>,
    pub log: TrainLog,
}

pub fn train_cnn(labeled: &LabeledPool, schema: &ClassSchema, cfg: &CnnTrainConfig, mut opts: TrainOptions<'_>) -> Result<CnnOutcome> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::Config("labeled pool is empty".into()));
    }
    if labeled.schema() != schema {
        return Err(Error::Config("pool schema differs from the training schema".into()));
    }
    let exec = opts.exec;
    let n = schema.len();
    let mut cnn = Cnn::<f32>::init(CnnConfig::standard(n), derive_seed(cfg.seed, &[0xC22]));
    let mut state = RmsPropState::new(&cnn.params);
    let rms = cfg.rmsprop();
    let order_seed = derive_seed(cfg.seed, &[0x1AB]);
    let mut log = TrainLog::default();
    let started = Instant::now();
    let mut step = 0u64;

    'epochs: for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut epoch_steps) = (0.0, 0u64);
        for batch in batches(labeled, cfg.batch_size, order_seed, epoch) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
            let labels: Vec<usize> = batch.class_labels().iter().map(|&l| l as usize).collect();
            let b = labels.len();
            let jobs: Vec<(usize, usize)> = (0..b).step_by(cfg.micro_batch).map(|s| (s, (s + cfg.micro_batch).min(b))).collect();
            let (grads, [loss]) = accumulate(exec, &jobs, &cnn.params, |&(s, e), grads| {
                let trace = cnn.forward(&batch.vectors[s * PBV_LEN..e * PBV_LEN], e - s);
                let l = cnn_loss_from_logits(&to_f64(&trace.logits), n, &labels[s..e]).expect("labels in range");
                let share = (e - s) as f64 / b as f64;
                cnn.backward(&trace, &from_f64(&l.grad, share), grads);
                [l.value * share]
            });
            if !loss.is_finite() || !grads.all_finite() {
                if let Some(sink) = opts.sink.as_mut() {
                    sink(SnapshotKind::Diagnostic { step }, Snapshot::Cnn(&cnn))?;
                }
                return Err(Error::Divergence(format!("step {step}: non-finite cnn loss {loss}")));
            }
            super::rmsprop_step_in_place(&mut cnn.params, &grads, &mut state, &rms)?;
            log.records.push(LogRecord::Step(StepRecord {
                step,
                epoch,
                loss,
                labeled: None,
                unlabeled_real: None,
                unlabeled_fake: None,
                generator: None,
            }));
            log.wall_clock_ms.push(started.elapsed().as_secs_f64() * 1e3);
            loss_sum += loss;
            epoch_steps += 1;
            step += 1;
        }
        if epoch_steps > 0 {
            let heldout_accuracy = opts.heldout.map(|pool| accuracy_of(&predict_classes(exec, Classifier::Cnn(&cnn), pool), pool.labels()));
            log.records.push(LogRecord::Epoch(EpochRecord {
                epoch,
                steps: epoch_steps,
                mean_loss: loss_sum / epoch_steps as f64,
                mean_generator_loss: None,
                heldout_accuracy,
            }));
        }
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            if let Some(sink) = opts.sink.as_mut() {
                sink(SnapshotKind::Periodic { epoch }, Snapshot::Cnn(&cnn))?;
            }
        }
    }
    Ok(CnnOutcome { cnn, log })
}
