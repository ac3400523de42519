//! Discriminator, generator and baseline objectives with analytic
//! gradients. Batches are row-major `f64` slices; every value is a batch
//! mean and every gradient is of that mean.

use crate::error::{Error, Result};
use crate::models::DiscriminatorOutput;
use crate::nn::math::{log_sum_exp, sigmoid, softmax, softplus};

#[derive(Debug, Clone, PartialEq)]
pub struct Loss {
    pub value: f64,
    pub batch_size: usize,
    /// Gradient of `value` w.r.t. the input rows (logits or fake features).
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledLoss {
    pub value: f64,
    pub real: Loss,
    pub fake: Loss,
}

/// Concatenated logits of a batch of outputs.
pub fn stack_logits(outs: &[DiscriminatorOutput]) -> Vec<f64> {
    outs.iter().flat_map(|o| o.logits.iter().copied()).collect()
}

pub fn stack_features(outs: &[DiscriminatorOutput]) -> Vec<f64> {
    outs.iter().flat_map(|o| o.features.iter().copied()).collect()
}

fn rows(len: usize, width: usize) -> Result<usize> {
    if width == 0 || len % width != 0 {
        return Err(Error::Contract(format!("batch of {len} values is not a multiple of row width {width}")));
    }
    Ok(len / width)
}

fn check_labels(labels: &[usize], b: usize, k: usize) -> Result<()> {
    if labels.len() != b {
        return Err(Error::Contract(format!("{} labels for a batch of {b}", labels.len())));
    }
    match labels.iter().find(|&&y| y >= k) {
        Some(y) => Err(Error::Contract(format!("label {y} out of range for {k} classes"))),
        None => Ok(()),
    }
}

/// Mean `-log softmax(logits)[label]`.
pub fn labeled_loss(logits: &[f64], k: usize, labels: &[usize]) -> Result<Loss> {
    let b = rows(logits.len(), k)?;
    check_labels(labels, b, k)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (row, &y)) in logits.chunks(k).zip(labels).enumerate() {
        value += log_sum_exp(row) - row[y];
        let p = softmax(row);
        for (j, g) in grad[i * k..(i + 1) * k].iter_mut().enumerate() {
            *g = (p[j] - f64::from(j == y)) / b as f64;
        }
    }
    Ok(Loss {
        value: value / b.max(1) as f64,
        batch_size: b,
        grad,
    })
}

/// Shared body of the two realness branches: mean `softplus(sign * logZ)`.
fn realness_branch(logits: &[f64], k: usize, sign: f64) -> Result<Loss> {
    let b = rows(logits.len(), k)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, row) in logits.chunks(k).enumerate() {
        let lz = log_sum_exp(row);
        value += softplus(sign * lz);
        let outer = sign * sigmoid(sign * lz) / b as f64;
        for (g, p) in grad[i * k..(i + 1) * k].iter_mut().zip(softmax(row)) {
            *g = outer * p;
        }
    }
    Ok(Loss {
        value: value / b.max(1) as f64,
        batch_size: b,
        grad,
    })
}

/// Mean `-log D(x)` over real samples.
pub fn unlabeled_real_loss(logits: &[f64], k: usize) -> Result<Loss> {
    realness_branch(logits, k, -1.0)
}

/// Mean `-log(1 - D(x))` over generated samples.
pub fn unlabeled_fake_loss(logits: &[f64], k: usize) -> Result<Loss> {
    realness_branch(logits, k, 1.0)
}

pub fn unlabeled_loss(real_logits: &[f64], fake_logits: &[f64], k: usize) -> Result<UnlabeledLoss> {
    let real = unlabeled_real_loss(real_logits, k)?;
    let fake = unlabeled_fake_loss(fake_logits, k)?;
    Ok(UnlabeledLoss {
        value: real.value + fake.value,
        real,
        fake,
    })
}

/// Squared distance between the batch means of real and fake features.
/// The gradient is w.r.t. the fake feature rows.
pub fn feature_matching_loss(real: &[f64], fake: &[f64], dim: usize) -> Result<Loss> {
    let br = rows(real.len(), dim)?;
    let bf = rows(fake.len(), dim)?;
    if br == 0 || bf == 0 {
        return Err(Error::Contract("feature matching needs non-empty batches".into()));
    }
    let mean = |x: &[f64], b: usize| {
        let mut m = vec![0.0; dim];
        for row in x.chunks(dim) {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= b as f64);
        m
    };
    let diff: Vec<f64> = mean(real, br).iter().zip(mean(fake, bf)).map(|(r, f)| r - f).collect();
    let value = diff.iter().map(|d| d * d).sum();
    let row: Vec<f64> = diff.iter().map(|d| -2.0 * d / bf as f64).collect();
    Ok(Loss {
        value,
        batch_size: bf,
        grad: row.repeat(bf),
    })
}

/// Mean cross-entropy of probability rows against labels.
pub fn cnn_loss(probs: &[f64], n: usize, labels: &[usize]) -> Result<f64> {
    let b = rows(probs.len(), n)?;
    check_labels(labels, b, n)?;
    let total: f64 = probs.chunks(n).zip(labels).map(|(row, &y)| -row[y].max(f64::MIN_POSITIVE).ln()).sum();
    Ok(total / b.max(1) as f64)
}

/// Cross-entropy evaluated from logits, with its gradient.
pub fn cnn_loss_from_logits(logits: &[f64], n: usize, labels: &[usize]) -> Result<Loss> {
    labeled_loss(logits, n, labels)
}

/// Pointwise `p_data / (p_data + p_g)`; points where both vanish get 0.5.
pub fn optimal_discriminator_check(p_data: &[f64], p_g: &[f64]) -> Result<Vec<f64>> {
    if p_data.len() != p_g.len() {
        return Err(Error::Contract(format!("support sizes differ: {} vs {}", p_data.len(), p_g.len())));
    }
    Ok(p_data
        .iter()
        .zip(p_g)
        .map(|(&d, &g)| if d + g == 0.0 { 0.5 } else { d / (d + g) })
        .collect())
}
