//! Prediction, confusion-matrix metrics, reports and experiment grids.

mod experiments;
mod metrics;
mod synthetic;

pub use experiments::{
    cells_csv, experiment1_csv, experiment2_csv, per_class_csv, run_experiment_1, run_experiment_2, CellArm, CellResult, Experiment1Config, Experiment1Row,
    Experiment2Config, Experiment2Row, GridOptions, LossPoint, Summary, SyntheticBenchmark,
};
pub use metrics::{ClassMetrics, ConfusionMatrix, EvalReport, ReportMeta};
pub use synthetic::{class_templates, make_synthetic_dataset, make_synthetic_dataset_with, nearest_template, ClassTemplate, SyntheticSpec};

use crate::checkpoint::Checkpoint;
use crate::dataset::{gather, LabeledPool, SamplePool};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{Cnn, Discriminator};
use crate::nn::math::softmax;

/// A trained network that maps PBVs to class probabilities.
#[derive(Debug, Clone, Copy)]
pub enum Classifier<'a> {
    Discriminator(&'a Discriminator<f32>),
    Cnn(&'a Cnn<f32>),
}

impl Classifier<'_> {
    pub fn num_classes(&self) -> usize {
        match self {
            Classifier::Discriminator(d) => d.config.num_classes,
            Classifier::Cnn(c) => c.config.num_classes,
        }
    }

    fn chunk(&self) -> usize {
        match self {
            Classifier::Discriminator(_) => 64,
            Classifier::Cnn(_) => 8,
        }
    }

    /// Supervised class probabilities for `nb` row-major PBVs.
    pub fn probs(&self, x: &[f32], nb: usize) -> Vec<Vec<f64>> {
        let logits = match self {
            Classifier::Discriminator(d) => d.forward(x, nb).logits,
            Classifier::Cnn(c) => c.forward(x, nb).logits,
        };
        let k = self.num_classes();
        logits.chunks(k).map(|row| softmax(&row.iter().map(|&v| f64::from(v)).collect::<Vec<_>>())).collect()
    }
}

pub fn predict_probs<P: SamplePool + ?Sized>(exec: Exec, model: Classifier<'_>, pool: &P) -> Vec<Vec<f64>> {
    let members: Vec<usize> = (0..pool.len()).collect();
    exec.map_chunks(pool.len(), model.chunk(), |r| {
        let batch = gather(pool, &members[r]);
        model.probs(&batch.vectors, batch.len())
    })
    .concat()
}

pub fn argmax(xs: &[f64]) -> usize {
    crate::models::argmax(xs)
}

pub fn predict_classes<P: SamplePool + ?Sized>(exec: Exec, model: Classifier<'_>, pool: &P) -> Vec<usize> {
    predict_probs(exec, model, pool).iter().map(|p| argmax(p)).collect()
}

pub fn accuracy_of(predictions: &[usize], labels: &[u16]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(&p, &l)| p == l as usize).count();
    hits as f64 / labels.len() as f64
}

/// Scores a checkpoint on a labeled pool. Predictions are the argmax of the
/// supervised class probabilities.
pub fn evaluate(exec: Exec, checkpoint: &Checkpoint, pool: &LabeledPool) -> Result<EvalReport> {
    if &checkpoint.schema != pool.schema() {
        return Err(Error::Config(format!(
            "model classes {:?} differ from dataset classes {:?}",
            checkpoint.schema.names(),
            pool.schema().names()
        )));
    }
    let preds = predict_classes(exec, checkpoint.classifier(), pool);
    let truth: Vec<usize> = pool.labels().iter().map(|&l| l as usize).collect();
    let cm = ConfusionMatrix::from_predictions(checkpoint.schema.len(), &truth, &preds)?;
    Ok(EvalReport::new(
        &cm,
        &checkpoint.schema,
        ReportMeta {
            architecture: checkpoint.arch_tag().to_owned(),
            fingerprint: checkpoint.fingerprint(),
            ..ReportMeta::default()
        },
    ))
}
