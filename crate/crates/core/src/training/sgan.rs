use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{accumulate, from_f64, to_f64, AdamConfig, AdamState, Cycler, EpochRecord, LogRecord, Snapshot, SnapshotKind, StepRecord, TrainLog, TrainOptions};
use crate::dataset::{epoch_order, gather, Batch, ClassSchema, LabeledPool, SamplePool, UnlabeledPool};
use crate::error::{Error, Result};
use crate::eval::{accuracy_of, predict_classes, Classifier};
use crate::exec::Exec;
use crate::losses::{feature_matching_loss, labeled_loss, unlabeled_fake_loss, unlabeled_real_loss};
use crate::models::{fill_noise, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, NoisePrior};
use crate::nn::ParamSet;
use crate::pbv::PBV_LEN;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SganTrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub disc_steps_per_gen_step: usize,
    pub epochs: u64,
    pub noise_dim: usize,
    pub noise_prior: NoisePrior,
    pub seed: u64,
    /// Snapshot cadence in epochs; 0 disables periodic snapshots.
    pub checkpoint_every: u64,
    pub labeled_weight: f64,
    pub unlabeled_weight: f64,
    /// Stops after this many discriminator steps when set.
    pub max_steps: Option<u64>,
    /// Samples per forward/backward job inside a step.
    pub micro_batch: usize,
}

impl Default for SganTrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 256,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            disc_steps_per_gen_step: 1,
            epochs: 10,
            noise_dim: 100,
            noise_prior: NoisePrior::Uniform,
            seed: 0,
            checkpoint_every: 0,
            labeled_weight: 1.0,
            unlabeled_weight: 1.0,
            max_steps: None,
            micro_batch: 32,
        }
    }
}

impl SganTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_epsilon <= 0.0 {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        if self.disc_steps_per_gen_step < 1 {
            return bad("disc_steps_per_gen_step must be at least 1".into());
        }
        if self.noise_dim != 100 {
            return bad(format!("noise_dim is fixed at 100, got {}", self.noise_dim));
        }
        if self.labeled_weight < 0.0 || self.unlabeled_weight < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        if self.micro_batch == 0 {
            return bad("micro_batch must be positive".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            noise_dim: self.noise_dim,
            noise_prior: self.noise_prior,
            ..GeneratorConfig::standard()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SganOutcome {
    pub discriminator: Discriminator<f32>,
    pub generator: Generator<f32>,
    pub log: TrainLog,
}

#[derive(Clone, Copy)]
enum Branch {
    Labeled,
    Real,
    Fake,
}

struct DiscJob<'a> {
    branch: Branch,
    rows: &'a [f32],
    labels: &'a [usize],
    /// Size of the whole branch batch the chunk belongs to.
    batch: usize,
}

fn chunk_jobs<'a>(branch: Branch, rows: &'a [f32], labels: &'a [usize], micro: usize, out: &mut Vec<DiscJob<'a>>) {
    let n = rows.len() / PBV_LEN;
    for start in (0..n).step_by(micro) {
        let end = (start + micro).min(n);
        out.push(DiscJob {
            branch,
            rows: &rows[start * PBV_LEN..end * PBV_LEN],
            labels: if labels.is_empty() { &[] } else { &labels[start..end] },
            batch: n,
        });
    }
}

fn generate(exec: Exec, g: &Generator<f32>, z: &[f32], micro: usize) -> Vec<f32> {
    let dim = g.config.noise_dim;
    exec.map_chunks(z.len() / dim, micro, |r| g.forward(&z[r.start * dim..r.end * dim], r.len()).output)
        .concat()
}

/// Latent batch for `step`; `phase` 0 feeds the discriminator update and 1
/// the generator update.
pub fn sgan_noise(cfg: &SganTrainConfig, step: u64, phase: u64, n: usize) -> Vec<f32> {
    let mut z = vec![0f32; n * cfg.noise_dim];
    fill_noise(cfg.noise_prior, &mut z, &mut stream(cfg.seed, &[0x2015E, step, phase]));
    z
}

/// Inputs of one training step.
#[derive(Debug, Clone)]
pub struct StepBatch {
    pub step: u64,
    pub labeled: Batch,
    pub labels: Vec<usize>,
    /// `None` in supervised-only training.
    pub real: Option<Batch>,
}

/// Branch losses of one discriminator update, measured on the forward pass
/// whose gradients were applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorLosses {
    pub labeled: f64,
    pub unlabeled_real: f64,
    pub unlabeled_fake: f64,
    pub total: f64,
}

/// Discriminator/generator pair with optimizer state, advanced one update
/// at a time.
pub struct SganTrainer<'p> {
    cfg: SganTrainConfig,
    exec: Exec,
    labeled: &'p LabeledPool,
    unlabeled: &'p UnlabeledPool,
    discriminator: Discriminator<f32>,
    generator: Generator<f32>,
    d_opt: AdamState<f32>,
    g_opt: AdamState<f32>,
    lab_cycle: Cycler,
}

impl<'p> SganTrainer<'p> {
    pub fn new(labeled: &'p LabeledPool, unlabeled: &'p UnlabeledPool, schema: &ClassSchema, cfg: &SganTrainConfig, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        if labeled.is_empty() {
            return Err(Error::Config("labeled pool is empty".into()));
        }
        if labeled.schema() != schema || unlabeled.schema() != schema {
            return Err(Error::Config("pool schema differs from the training schema".into()));
        }
        let discriminator = Discriminator::<f32>::init(DiscriminatorConfig::standard(schema.len()), derive_seed(cfg.seed, &[0xD15C]));
        let generator = Generator::<f32>::init(cfg.generator_config(), derive_seed(cfg.seed, &[0x6E4]));
        Ok(Self {
            d_opt: AdamState::new(&discriminator.params),
            g_opt: AdamState::new(&generator.params),
            lab_cycle: Cycler::new(labeled.len(), derive_seed(cfg.seed, &[0x1AB])),
            cfg: cfg.clone(),
            exec,
            labeled,
            unlabeled,
            discriminator,
            generator,
        })
    }

    pub fn discriminator(&self) -> &Discriminator<f32> {
        &self.discriminator
    }

    pub fn generator(&self) -> &Generator<f32> {
        &self.generator
    }

    pub fn supervised_only(&self) -> bool {
        self.unlabeled.is_empty()
    }

    /// Unlabeled pool order for `epoch`.
    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        if self.supervised_only() {
            Vec::new()
        } else {
            epoch_order(self.unlabeled.len(), derive_seed(self.cfg.seed, &[0x0AB]), epoch)
        }
    }

    /// Next labeled batch plus the given unlabeled members.
    pub fn draw(&mut self, step: u64, unlabeled_members: &[usize]) -> StepBatch {
        let lb = self.cfg.batch_size.min(self.labeled.len());
        let labeled = gather(self.labeled, &self.lab_cycle.take(lb));
        let labels = labeled.class_labels().iter().map(|&l| l as usize).collect();
        let real = (!self.supervised_only()).then(|| gather(self.unlabeled, unlabeled_members));
        StepBatch { step, labeled, labels, real }
    }

    /// One Adam update of the discriminator on labeled, real and generated
    /// samples. The generator is only read.
    pub fn discriminator_step(&mut self, batch: &StepBatch) -> Result<DiscriminatorLosses> {
        let (cfg, exec, micro) = (&self.cfg, self.exec, self.cfg.micro_batch);
        let d = &self.discriminator;
        let k = d.config.num_classes;
        let fake = batch.real.as_ref().map(|r| generate(exec, &self.generator, &sgan_noise(cfg, batch.step, 0, r.len()), micro));
        let mut jobs = Vec::new();
        chunk_jobs(Branch::Labeled, &batch.labeled.vectors, &batch.labels, micro, &mut jobs);
        if let (Some(real), Some(fake)) = (&batch.real, &fake) {
            chunk_jobs(Branch::Real, &real.vectors, &[], micro, &mut jobs);
            chunk_jobs(Branch::Fake, fake, &[], micro, &mut jobs);
        }
        let (grads, stats) = accumulate(exec, &jobs, &d.params, |job, grads| {
            let n = job.rows.len() / PBV_LEN;
            let trace = d.forward(job.rows, n);
            let logits = to_f64(&trace.logits);
            let (loss, weight, slot) = match job.branch {
                Branch::Labeled => (labeled_loss(&logits, k, job.labels).expect("labels in range"), cfg.labeled_weight, 0),
                Branch::Real => (unlabeled_real_loss(&logits, k).expect("row width"), cfg.unlabeled_weight, 1),
                Branch::Fake => (unlabeled_fake_loss(&logits, k).expect("row width"), cfg.unlabeled_weight, 2),
            };
            let share = n as f64 / job.batch as f64;
            let dl = from_f64(&loss.grad, share * weight);
            d.backward(&trace, Some(&dl), None, Some(grads), false);
            let mut out = [0.0; 3];
            out[slot] = loss.value * share;
            out
        });
        let [labeled, unlabeled_real, unlabeled_fake] = stats;
        let unsup = if batch.real.is_some() { cfg.unlabeled_weight * (unlabeled_real + unlabeled_fake) } else { 0.0 };
        let total = cfg.labeled_weight * labeled + unsup;
        let step = batch.step;
        if !total.is_finite() || !grads.all_finite() {
            return Err(Error::Divergence(format!("step {step}: non-finite discriminator loss {total}")));
        }
        super::adam_step_in_place(&mut self.discriminator.params, &grads, &mut self.d_opt, &cfg.adam())?;
        if !self.discriminator.params.all_finite() {
            return Err(Error::Divergence(format!("step {step}: non-finite discriminator parameters")));
        }
        Ok(DiscriminatorLosses {
            labeled,
            unlabeled_real,
            unlabeled_fake,
            total,
        })
    }

    /// One Adam update of the generator on the feature-matching loss
    /// against the batch's real samples. The discriminator is only read.
    pub fn generator_step(&mut self, batch: &StepBatch) -> Result<f64> {
        let real = batch
            .real
            .as_ref()
            .ok_or_else(|| Error::Contract("generator step needs unlabeled samples".into()))?;
        let z = sgan_noise(&self.cfg, batch.step, 1, self.cfg.batch_size);
        let (fm, grads) = generator_grads(self.exec, &self.discriminator, &self.generator, &real.vectors, &z, self.cfg.micro_batch);
        let step = batch.step;
        if !fm.is_finite() || !grads.all_finite() {
            return Err(Error::Divergence(format!("step {step}: non-finite generator loss {fm}")));
        }
        super::adam_step_in_place(&mut self.generator.params, &grads, &mut self.g_opt, &self.cfg.adam())?;
        if !self.generator.params.all_finite() {
            return Err(Error::Divergence(format!("step {step}: non-finite generator parameters")));
        }
        Ok(fm)
    }

    fn snapshot(&self) -> Snapshot<'_> {
        Snapshot::Sgan {
            discriminator: &self.discriminator,
            generator: &self.generator,
        }
    }

    pub fn into_networks(self) -> (Discriminator<f32>, Generator<f32>) {
        (self.discriminator, self.generator)
    }
}

/// Trains the discriminator/generator pair. An empty unlabeled pool gives
/// supervised-only training of the discriminator.
pub fn train_sgan(labeled: &LabeledPool, unlabeled: &UnlabeledPool, schema: &ClassSchema, cfg: &SganTrainConfig, mut opts: TrainOptions<'_>) -> Result<SganOutcome> {
    let exec = opts.exec;
    let mut tr = SganTrainer::new(labeled, unlabeled, schema, cfg, exec)?;
    let supervised = tr.supervised_only();
    let pass_len = if supervised { labeled.len() } else { unlabeled.len() };
    let steps_per_epoch = pass_len.div_ceil(cfg.batch_size);

    let mut log = TrainLog::default();
    let started = Instant::now();
    let mut step = 0u64;

    'epochs: for epoch in 0..cfg.epochs {
        let u_order = tr.epoch_order(epoch);
        let (mut loss_sum, mut gen_sum, mut gen_count, mut epoch_steps) = (0.0, 0.0, 0u64, 0u64);
        for s in 0..steps_per_epoch {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
            let members = if supervised { &[][..] } else { &u_order[s * cfg.batch_size..((s + 1) * cfg.batch_size).min(u_order.len())] };
            let batch = tr.draw(step, members);
            let losses = match tr.discriminator_step(&batch) {
                Ok(l) => l,
                Err(e) => return diverged(&mut opts, step, &tr, e),
            };
            let mut gen_loss = None;
            if !supervised && (step + 1) % cfg.disc_steps_per_gen_step as u64 == 0 {
                let fm = match tr.generator_step(&batch) {
                    Ok(fm) => fm,
                    Err(e) => return diverged(&mut opts, step, &tr, e),
                };
                gen_loss = Some(fm);
                gen_sum += fm;
                gen_count += 1;
            }

            log.records.push(LogRecord::Step(StepRecord {
                step,
                epoch,
                loss: losses.total,
                labeled: Some(losses.labeled),
                unlabeled_real: (!supervised).then_some(losses.unlabeled_real),
                unlabeled_fake: (!supervised).then_some(losses.unlabeled_fake),
                generator: gen_loss,
            }));
            log.wall_clock_ms.push(started.elapsed().as_secs_f64() * 1e3);
            loss_sum += losses.total;
            epoch_steps += 1;
            step += 1;
        }
        finish_epoch(&mut log, epoch, epoch_steps, loss_sum, (gen_count > 0).then(|| gen_sum / gen_count as f64), exec, tr.discriminator(), opts.heldout);
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            if let Some(sink) = opts.sink.as_mut() {
                sink(SnapshotKind::Periodic { epoch }, tr.snapshot())?;
            }
        }
    }
    let (discriminator, generator) = tr.into_networks();
    Ok(SganOutcome {
        discriminator,
        generator,
        log,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish_epoch(log: &mut TrainLog, epoch: u64, steps: u64, loss_sum: f64, gen: Option<f64>, exec: Exec, d: &Discriminator<f32>, heldout: Option<&LabeledPool>) {
    if steps == 0 {
        return;
    }
    let heldout_accuracy = heldout.map(|pool| accuracy_of(&predict_classes(exec, Classifier::Discriminator(d), pool), pool.labels()));
    log.records.push(LogRecord::Epoch(EpochRecord {
        epoch,
        steps,
        mean_loss: loss_sum / steps as f64,
        mean_generator_loss: gen,
        heldout_accuracy,
    }));
}

fn diverged<T>(opts: &mut TrainOptions<'_>, step: u64, tr: &SganTrainer<'_>, err: Error) -> Result<T> {
    if let (Error::Divergence(_), Some(sink)) = (&err, opts.sink.as_mut()) {
        sink(SnapshotKind::Diagnostic { step }, tr.snapshot())?;
    }
    Err(err)
}

/// Feature-matching loss and its gradient w.r.t. the generator parameters,
/// with the discriminator held fixed.
fn generator_grads(exec: Exec, d: &Discriminator<f32>, g: &Generator<f32>, real: &[f32], z: &[f32], micro: usize) -> (f64, ParamSet<f32>) {
    let dim = g.config.noise_dim;
    let h = d.config.hidden;
    let nf = z.len() / dim;
    let traces = exec.map_chunks(nf, micro, |r| {
        let gt = g.forward(&z[r.start * dim..r.end * dim], r.len());
        let dt = d.forward(&gt.output, r.len());
        (gt, dt)
    });
    let real_features = exec.map_chunks(real.len() / PBV_LEN, micro, |r| to_f64(&d.forward(&real[r.start * PBV_LEN..r.end * PBV_LEN], r.len()).features)).concat();
    let fake_features: Vec<f64> = traces.iter().flat_map(|(_, dt)| to_f64(&dt.features)).collect();
    let fm = feature_matching_loss(&real_features, &fake_features, h).expect("non-empty batches");
    let jobs: Vec<usize> = (0..traces.len()).collect();
    let (grads, _) = accumulate::<f32, usize, 0>(exec, &jobs, &g.params, |&i, grads| {
        let (gt, dt) = &traces[i];
        let off = i * micro * h;
        let df = from_f64(&fm.grad[off..off + dt.nb * h], 1.0);
        let dx = d.backward(dt, None, Some(&df), None, true).expect("input gradient");
        g.backward(gt, &dx, grads);
        []
    });
    (fm.value, grads)
}
