//! Central finite differences against the analytic backward passes, on
//! miniature networks run in f64.

mod common;

use bytesgan::models::{Discriminator, DiscriminatorConfig};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn discriminator_gradients_match_finite_differences() {
    let (params, input) = discriminator_errors();
    assert!(params < 1e-4, "parameters: relative error {params:e}");
    assert!(input < 1e-4, "input: relative error {input:e}");
}

#[test]
fn head_gradients_add_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cfg = DiscriminatorConfig::mini(3);
    let d = Discriminator::<f64>::init(cfg.clone(), 5);
    let nb = 3;
    let x = rand_vec(&mut rng, nb * cfg.input_len(), 1.0);
    let wl = rand_vec(&mut rng, nb * cfg.num_classes, 1.0);
    let wf = rand_vec(&mut rng, nb * cfg.hidden, 1.0);
    let trace = d.forward(&x, nb);
    let mut both = d.params.zeros_like();
    d.backward(&trace, Some(&wl), Some(&wf), Some(&mut both), false);
    let mut g1 = d.params.zeros_like();
    let mut g2 = d.params.zeros_like();
    d.backward(&trace, Some(&wl), None, Some(&mut g1), false);
    d.backward(&trace, None, Some(&wf), Some(&mut g2), false);
    g1.add_assign(&g2);
    for (a, b) in g1.values().zip(both.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn generator_gradients_match_finite_differences() {
    let err = generator_error();
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn cnn_gradients_match_finite_differences() {
    let err = cnn_error();
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn loss_gradients_match_finite_differences() {
    for (what, err) in loss_errors() {
        assert!(err < 1e-5, "{what}: relative error {err:e}");
    }
}
