use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    /// Number of updates applied so far.
    pub t: u64,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// Bias-corrected Adam update returning fresh parameters and state.
pub fn adam_step<T: Scalar>(params: &ParamSet<T>, grads: &ParamSet<T>, state: &AdamState<T>, cfg: &AdamConfig) -> Result<(ParamSet<T>, AdamState<T>)> {
    let mut p = params.clone();
    let mut s = state.clone();
    adam_step_in_place(&mut p, grads, &mut s, cfg)?;
    Ok((p, s))
}

pub fn adam_step_in_place<T: Scalar>(params: &mut ParamSet<T>, grads: &ParamSet<T>, state: &mut AdamState<T>, cfg: &AdamConfig) -> Result<()> {
    params.check_layout(grads, "adam gradients")?;
    params.check_layout(&state.m, "adam first moment")?;
    params.check_layout(&state.v, "adam second moment")?;
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one_b1 = T::from_f64(1.0 - cfg.beta1);
    let one_b2 = T::from_f64(1.0 - cfg.beta2);
    let step = T::from_f64(cfg.learning_rate / (1.0 - cfg.beta1.powi(t)));
    let inv_c2 = T::from_f64(1.0 / (1.0 - cfg.beta2.powi(t)));
    let eps = T::from_f64(cfg.epsilon);
    for (((p, g), m), v) in params.entries.iter_mut().zip(&grads.entries).zip(&mut state.m.entries).zip(&mut state.v.entries) {
        for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step * *m / ((*v * inv_c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState<T> {
    pub t: u64,
    pub mean_square: ParamSet<T>,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            t: 0,
            mean_square: params.zeros_like(),
        }
    }
}

pub fn rmsprop_step_in_place<T: Scalar>(params: &mut ParamSet<T>, grads: &ParamSet<T>, state: &mut RmsPropState<T>, cfg: &RmsPropConfig) -> Result<()> {
    params.check_layout(grads, "rmsprop gradients")?;
    if !params.same_layout(&state.mean_square) {
        return Err(Error::Contract("rmsprop state: parameter layouts differ".into()));
    }
    state.t += 1;
    let rho = T::from_f64(cfg.rho);
    let one_rho = T::from_f64(1.0 - cfg.rho);
    let lr = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.epsilon);
    for ((p, g), s) in params.entries.iter_mut().zip(&grads.entries).zip(&mut state.mean_square.entries) {
        for ((p, &g), s) in p.data.iter_mut().zip(&g.data).zip(&mut s.data) {
            *s = rho * *s + one_rho * g * g;
            *p -= lr * g / (s.sqrt() + eps);
        }
    }
    Ok(())
}
