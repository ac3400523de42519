//! Finite-difference checking shared by the gradient and acceptance suites.
#![allow(dead_code)]

use bytesgan::losses::{cnn_loss_from_logits, feature_matching_loss, labeled_loss, unlabeled_fake_loss, unlabeled_real_loss, Loss};
use bytesgan::models::{Cnn, CnnConfig, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use bytesgan::nn::ParamSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central difference, or `None` when the one-sided slopes disagree,
/// which happens when the step straddles a ReLU or max-pool kink.
pub fn central(f0: f64, up: f64, down: f64) -> Option<f64> {
    let fwd = (up - f0) / STEP;
    let bwd = (f0 - down) / STEP;
    ((fwd - bwd).abs() <= 1e-3 * fwd.abs().max(bwd.abs()).max(1.0)).then_some((up - down) / (2.0 * STEP))
}

/// Numerical gradient of `f` w.r.t. every entry of `params`.
pub fn numeric_params(params: &mut ParamSet<f64>, mut f: impl FnMut(&ParamSet<f64>) -> f64) -> Vec<Vec<Option<f64>>> {
    let f0 = f(params);
    let mut out = Vec::new();
    for e in 0..params.len() {
        let mut g = vec![None; params.get(e).len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = params.get(e)[i];
            params.get_mut(e)[i] = orig + STEP;
            let up = f(params);
            params.get_mut(e)[i] = orig - STEP;
            let down = f(params);
            params.get_mut(e)[i] = orig;
            *gi = central(f0, up, down);
        }
        out.push(g);
    }
    out
}

pub fn numeric_vec(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<Option<f64>> {
    let f0 = f(x);
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + STEP;
            let up = f(x);
            x[i] = orig - STEP;
            let down = f(x);
            x[i] = orig;
            central(f0, up, down)
        })
        .collect()
}

/// Relative error over the coordinates that have a numerical estimate.
/// At most 2% of coordinates (and at least one) may be skipped; more
/// skips count as an infinite error.
pub fn masked_err(analytic: &[f64], numeric: &[Option<f64>]) -> f64 {
    let (a, n): (Vec<f64>, Vec<f64>) = analytic.iter().zip(numeric).filter_map(|(&a, n)| n.map(|n| (a, n))).unzip();
    let skipped = analytic.len() - a.len();
    if skipped > (analytic.len() / 50).max(1) {
        return f64::INFINITY;
    }
    rel_err(&a, &n)
}

/// Worst relative error over the entries of a parameter set.
pub fn params_err(analytic: &ParamSet<f64>, numeric: &[Vec<Option<f64>>]) -> f64 {
    analytic.entries.iter().zip(numeric).map(|(e, num)| masked_err(&e.data, num)).fold(0.0, f64::max)
}

/// Scales the init up so activations leave the near-linear regime.
pub fn scaled<T>(mut p: ParamSet<f64>, s: f64, _: T) -> ParamSet<f64> {
    p.scale(s);
    p
}

/// Mini discriminator with a probe on both heads: worst error over the
/// parameters, and the error on the input gradient.
pub fn discriminator_errors() -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = DiscriminatorConfig::mini(3);
    let mut d = Discriminator::<f64>::init(cfg.clone(), 5);
    d.params = scaled(d.params, 40.0, ());
    for e in d.params.entries.iter_mut().filter(|e| e.name.ends_with(".b")) {
        e.data = rand_vec(&mut rng, e.data.len(), 0.1);
    }
    let nb = 3;
    let mut x = rand_vec(&mut rng, nb * cfg.input_len(), 1.0);
    let wl = rand_vec(&mut rng, nb * cfg.num_classes, 1.0);
    let wf = rand_vec(&mut rng, nb * cfg.hidden, 1.0);
    let probe = |d: &Discriminator<f64>, x: &[f64]| {
        let t = d.forward(x, nb);
        dot(&t.logits, &wl) + dot(&t.features, &wf)
    };
    let trace = d.forward(&x, nb);
    let mut grads = d.params.zeros_like();
    let dx = d.backward(&trace, Some(&wl), Some(&wf), Some(&mut grads), true).unwrap();
    let x0 = x.clone();
    let num = numeric_params(&mut d.params.clone(), |p| probe(&Discriminator::from_params(cfg.clone(), p.clone()).unwrap(), &x0));
    let num_x = numeric_vec(&mut x, |x| probe(&d, x));
    (params_err(&grads, &num), masked_err(&dx, &num_x))
}

pub fn generator_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = GeneratorConfig::mini();
    let mut g = Generator::<f64>::init(cfg.clone(), 6);
    g.params = scaled(g.params, 30.0, ());
    let nb = 2;
    let z = rand_vec(&mut rng, nb * cfg.noise_dim, 1.0);
    let w = rand_vec(&mut rng, nb * cfg.output_len(), 1.0);
    let trace = g.forward(&z, nb);
    let mut grads = g.params.zeros_like();
    g.backward(&trace, &w, &mut grads);
    let num = numeric_params(&mut g.params.clone(), |p| {
        let m = Generator::from_params(cfg.clone(), p.clone()).unwrap();
        dot(&m.forward(&z, nb).output, &w)
    });
    params_err(&grads, &num)
}

pub fn cnn_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = CnnConfig::mini(3);
    let mut m = Cnn::<f64>::init(cfg.clone(), 7);
    m.params = scaled(m.params, 25.0, ());
    for e in m.params.entries.iter_mut().filter(|e| e.name.ends_with(".b")) {
        e.data = rand_vec(&mut rng, e.data.len(), 0.05);
    }
    let nb = 2;
    let x = rand_vec(&mut rng, nb * cfg.input_len, 1.0);
    let w = rand_vec(&mut rng, nb * cfg.num_classes, 1.0);
    let trace = m.forward(&x, nb);
    let mut grads = m.params.zeros_like();
    m.backward(&trace, &w, &mut grads);
    let num = numeric_params(&mut m.params.clone(), |p| {
        let mm = Cnn::from_params(cfg.clone(), p.clone()).unwrap();
        dot(&mm.forward(&x, nb).logits, &w)
    });
    params_err(&grads, &num)
}

fn loss_err(mut x: Vec<f64>, f: impl Fn(&[f64]) -> Loss) -> f64 {
    let analytic = f(&x).grad;
    let num = numeric_vec(&mut x, |v| f(v).value);
    masked_err(&analytic, &num)
}

/// Worst error of every loss, over K in {2, 7, 15} for the logit losses.
pub fn loss_errors() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = vec![("labeled", 0f64), ("unlabeled real", 0.0), ("unlabeled fake", 0.0), ("cnn", 0.0)];
    for k in [2, 7, 15] {
        let logits = rand_vec(&mut rng, 4 * k, 4.0);
        let labels: Vec<usize> = (0..4).map(|i| (i * 5) % k).collect();
        let errs = [
            loss_err(logits.clone(), |l| labeled_loss(l, k, &labels).unwrap()),
            loss_err(logits.clone(), |l| unlabeled_real_loss(l, k).unwrap()),
            loss_err(logits.clone(), |l| unlabeled_fake_loss(l, k).unwrap()),
            loss_err(logits, |l| cnn_loss_from_logits(l, k, &labels).unwrap()),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            w.1 = w.1.max(e);
        }
    }
    let real = rand_vec(&mut rng, 5 * 6, 2.0);
    let fake = rand_vec(&mut rng, 3 * 6, 2.0);
    worst.push(("feature matching", loss_err(fake, |f| feature_matching_loss(&real, f, 6).unwrap())));
    worst
}
