use serde::{Deserialize, Serialize};

use super::discriminator::split2;
use super::{fingerprint, init_layout, Architecture};
use crate::error::{Error, Result};
use crate::nn::act::{relu, relu_backward};
use crate::nn::conv::{conv_backward, conv_forward, ConvGeom};
use crate::nn::dense::{dense_backward, dense_forward};
use crate::nn::math::softmax;
use crate::nn::pool::{max_pool_backward, max_pool_forward, pooled_len};
use crate::nn::{ParamSet, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnConfig {
    pub input_len: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pools: [usize; 3],
    pub hidden: usize,
    pub num_classes: usize,
}

impl CnnConfig {
    pub fn standard(num_classes: usize) -> Self {
        Self {
            input_len: 1480,
            filters: 128,
            kernel: 5,
            pools: [5, 5, 35],
            hidden: 256,
            num_classes,
        }
    }

    pub fn mini(num_classes: usize) -> Self {
        Self {
            input_len: 60,
            filters: 4,
            kernel: 5,
            pools: [3, 3, 5],
            hidden: 8,
            num_classes,
        }
    }

    /// Widths after each conv and each pool, in order.
    pub fn widths(&self) -> [usize; 6] {
        let mut w = [0; 6];
        let mut cur = self.input_len;
        for s in 0..3 {
            cur = cur + 1 - self.kernel;
            w[2 * s] = cur;
            cur = pooled_len(cur, self.pools[s], 1);
            w[2 * s + 1] = cur;
        }
        w
    }

    pub fn geoms(&self) -> [ConvGeom; 3] {
        let w = self.widths();
        let ins = [self.input_len, w[1], w[3]];
        let cins = [1, self.filters, self.filters];
        std::array::from_fn(|s| ConvGeom::valid(1, ins[s], cins[s], self.filters, 1, self.kernel, 1))
    }

    pub fn flat_len(&self) -> usize {
        self.widths()[5] * self.filters
    }

    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let [g1, g2, g3] = self.geoms();
        vec![
            ("conv1.w", g1.weight_shape()),
            ("conv1.b", vec![self.filters]),
            ("conv2.w", g2.weight_shape()),
            ("conv2.b", vec![self.filters]),
            ("conv3.w", g3.weight_shape()),
            ("conv3.b", vec![self.filters]),
            ("hidden.w", vec![self.flat_len(), self.hidden]),
            ("hidden.b", vec![self.hidden]),
            ("logits.w", vec![self.hidden, self.num_classes]),
            ("logits.b", vec![self.num_classes]),
        ]
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(Architecture::Cnn, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("cnn needs at least 2 classes, got {}", self.num_classes)));
        }
        if self.filters == 0 || self.kernel == 0 || self.hidden == 0 || self.pools.contains(&0) {
            return Err(Error::Config("cnn dimensions must be positive".into()));
        }
        let need = 3 * (self.kernel - 1) + self.pools.iter().map(|p| p - 1).sum::<usize>() + 1;
        if self.input_len < need {
            return Err(Error::Config(format!("cnn input length {} shorter than receptive field {need}", self.input_len)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CnnTrace<T> {
    pub nb: usize,
    input: Vec<T>,
    convs: [Vec<T>; 3],
    pooled: [Vec<T>; 3],
    argmax: [Vec<u32>; 3],
    hidden: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> CnnTrace<T> {
    pub fn probs(&self) -> Vec<Vec<f64>> {
        let k = self.logits.len() / self.nb.max(1);
        self.logits.chunks(k).map(|row| softmax(&row.iter().map(|v| v.to_f64()).collect::<Vec<_>>())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn<T> {
    pub config: CnnConfig,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Cnn<T> {
    pub fn init(config: CnnConfig, seed: u64) -> Self {
        let params = init_layout(Architecture::Cnn, &config.layout(), seed);
        Self { config, params }
    }

    pub fn from_params(config: CnnConfig, params: ParamSet<T>) -> Result<Self> {
        params.check_layout(&ParamSet::zeros(&config.layout()), "cnn")?;
        Ok(Self { config, params })
    }

    pub fn forward(&self, x: &[T], nb: usize) -> CnnTrace<T> {
        let cfg = &self.config;
        assert_eq!(x.len(), nb * cfg.input_len, "cnn input shape");
        let p = &self.params;
        let geoms = cfg.geoms();
        let mut convs: [Vec<T>; 3] = Default::default();
        let mut pooled: [Vec<T>; 3] = Default::default();
        let mut argmax: [Vec<u32>; 3] = Default::default();
        for s in 0..3 {
            let input = if s == 0 { x } else { &pooled[s - 1] };
            let mut c = conv_forward(&geoms[s], p.get(2 * s), p.get(2 * s + 1), input, nb);
            relu(&mut c);
            let (y, arg) = max_pool_forward(&c, nb, geoms[s].out_w, cfg.filters, cfg.pools[s], 1);
            convs[s] = c;
            pooled[s] = y;
            argmax[s] = arg;
        }
        let mut hidden = dense_forward(p.get(6), p.get(7), &pooled[2], nb, cfg.flat_len());
        relu(&mut hidden);
        let logits = dense_forward(p.get(8), p.get(9), &hidden, nb, cfg.hidden);
        CnnTrace {
            nb,
            input: x.to_vec(),
            convs,
            pooled,
            argmax,
            hidden,
            logits,
        }
    }

    /// Class probabilities for a batch of `input_len` vectors.
    pub fn predict(&self, x: &[T], nb: usize) -> Vec<Vec<f64>> {
        self.forward(x, nb).probs()
    }

    pub fn backward(&self, trace: &CnnTrace<T>, d_logits: &[T], grads: &mut ParamSet<T>) {
        let cfg = &self.config;
        let p = &self.params;
        let nb = trace.nb;
        let mut grads = Some(grads);
        let mut d = dense_backward(p.get(8), &trace.hidden, d_logits, nb, cfg.hidden, split2(&mut grads, 8), true).expect("dx");
        relu_backward(&trace.hidden, &mut d);
        let mut d = dense_backward(p.get(6), &trace.pooled[2], &d, nb, cfg.flat_len(), split2(&mut grads, 6), true).expect("dx");
        let geoms = cfg.geoms();
        for s in (0..3).rev() {
            let mut dc = max_pool_backward(&d, &trace.argmax[s], trace.convs[s].len());
            relu_backward(&trace.convs[s], &mut dc);
            let input = if s == 0 { &trace.input } else { &trace.pooled[s - 1] };
            match conv_backward(&geoms[s], p.get(2 * s), input, &dc, nb, split2(&mut grads, 2 * s), s > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_length_chain() {
        let c = CnnConfig::standard(15);
        assert_eq!(c.widths(), [1476, 1472, 1468, 1464, 1460, 1426]);
        assert_eq!(c.flat_len(), 1426 * 128);
        c.validate().unwrap();
        CnnConfig::mini(3).validate().unwrap();
    }

    #[test]
    fn zero_final_weights_give_uniform_probs() {
        let mut m = Cnn::<f64>::init(CnnConfig::mini(5), 2);
        m.params.get_mut(8).fill(0.0);
        let x: Vec<f64> = (0..120).map(|i| ((i * 7 % 255) as f64) / 127.5 - 1.0).collect();
        for row in m.predict(&x, 2) {
            assert!(row.iter().all(|p| (p - 0.2).abs() < 1e-12));
        }
    }
}
