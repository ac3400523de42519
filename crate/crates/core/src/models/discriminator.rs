use serde::{Deserialize, Serialize};

use super::{check_finite, fingerprint, init_layout, Architecture, LEAK};
use crate::error::{Error, Result};
use crate::nn::act::{leaky_relu, leaky_relu_backward};
use crate::nn::conv::{conv_backward, conv_forward, ConvGeom};
use crate::nn::dense::{dense_backward, dense_forward};
use crate::nn::math::{log_sum_exp, sigmoid, softmax};
use crate::nn::{ParamSet, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub height: usize,
    pub width: usize,
    pub channels: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl DiscriminatorConfig {
    pub fn standard(num_classes: usize) -> Self {
        Self {
            height: 20,
            width: 74,
            channels: [32, 64, 128],
            kernel: 3,
            stride: 2,
            hidden: 512,
            num_classes,
        }
    }

    pub fn mini(num_classes: usize) -> Self {
        Self {
            height: 6,
            width: 10,
            channels: [4, 4, 4],
            kernel: 3,
            stride: 2,
            hidden: 8,
            num_classes,
        }
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width
    }

    pub fn geoms(&self) -> [ConvGeom; 3] {
        let g1 = ConvGeom::same(self.height, self.width, 1, self.channels[0], self.kernel, self.kernel, self.stride);
        let g2 = ConvGeom::same(g1.out_h, g1.out_w, self.channels[0], self.channels[1], self.kernel, self.kernel, self.stride);
        let g3 = ConvGeom::same(g2.out_h, g2.out_w, self.channels[1], self.channels[2], self.kernel, self.kernel, self.stride);
        [g1, g2, g3]
    }

    pub fn flat_len(&self) -> usize {
        self.geoms()[2].out_len()
    }

    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let [g1, g2, g3] = self.geoms();
        vec![
            ("conv1.w", g1.weight_shape()),
            ("conv1.b", vec![g1.out_c]),
            ("conv2.w", g2.weight_shape()),
            ("conv2.b", vec![g2.out_c]),
            ("conv3.w", g3.weight_shape()),
            ("conv3.b", vec![g3.out_c]),
            ("hidden.w", vec![self.flat_len(), self.hidden]),
            ("hidden.b", vec![self.hidden]),
            ("logits.w", vec![self.hidden, self.num_classes]),
            ("logits.b", vec![self.num_classes]),
        ]
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(Architecture::Discriminator, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("discriminator needs at least 2 classes, got {}", self.num_classes)));
        }
        if self.height == 0 || self.width == 0 || self.kernel == 0 || self.stride == 0 || self.hidden == 0 || self.channels.contains(&0) {
            return Err(Error::Config("discriminator dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample view of the discriminator heads.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorOutput {
    pub logits: Vec<f64>,
    pub supervised_probs: Vec<f64>,
    /// `Z / (Z + 1)` with `Z = sum_k exp(l_k)`.
    pub realness: f64,
    pub features: Vec<f64>,
}

impl DiscriminatorOutput {
    pub fn from_logits(logits: Vec<f64>, features: Vec<f64>) -> Self {
        let supervised_probs = softmax(&logits);
        let realness = sigmoid(log_sum_exp(&logits));
        Self {
            logits,
            supervised_probs,
            realness,
            features,
        }
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.logits)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct DiscriminatorTrace<T> {
    pub nb: usize,
    input: Vec<T>,
    acts: [Vec<T>; 3],
    /// Hidden affine output before the activation (the feature layer).
    pub features: Vec<T>,
    hidden: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> DiscriminatorTrace<T> {
    pub fn outputs(&self) -> Vec<DiscriminatorOutput> {
        let k = self.logits.len() / self.nb.max(1);
        let f = self.features.len() / self.nb.max(1);
        (0..self.nb)
            .map(|i| {
                DiscriminatorOutput::from_logits(
                    self.logits[i * k..(i + 1) * k].iter().map(|v| v.to_f64()).collect(),
                    self.features[i * f..(i + 1) * f].iter().map(|v| v.to_f64()).collect(),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub config: DiscriminatorConfig,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn init(config: DiscriminatorConfig, seed: u64) -> Self {
        let params = init_layout(Architecture::Discriminator, &config.layout(), seed);
        Self { config, params }
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamSet<T>) -> Result<Self> {
        params.check_layout(&ParamSet::zeros(&config.layout()), "discriminator")?;
        Ok(Self { config, params })
    }

    /// Forward pass over `nb` row-major `height x width` inputs.
    pub fn forward(&self, x: &[T], nb: usize) -> DiscriminatorTrace<T> {
        assert_eq!(x.len(), nb * self.config.input_len(), "discriminator input shape");
        let p = &self.params;
        let slope = T::from_f64(LEAK);
        let geoms = self.config.geoms();
        let mut acts: [Vec<T>; 3] = Default::default();
        for (l, g) in geoms.iter().enumerate() {
            let input = if l == 0 { x } else { &acts[l - 1] };
            let mut a = conv_forward(g, p.get(2 * l), p.get(2 * l + 1), input, nb);
            leaky_relu(&mut a, slope);
            acts[l] = a;
        }
        let features = dense_forward(p.get(6), p.get(7), &acts[2], nb, self.config.flat_len());
        let mut hidden = features.clone();
        leaky_relu(&mut hidden, slope);
        let logits = dense_forward(p.get(8), p.get(9), &hidden, nb, self.config.hidden);
        DiscriminatorTrace {
            nb,
            input: x.to_vec(),
            acts,
            features,
            hidden,
            logits,
        }
    }

    /// Checked single-sample forward pass.
    pub fn output(&self, x: &[T]) -> Result<DiscriminatorOutput> {
        if x.len() != self.config.input_len() {
            return Err(Error::Contract(format!("discriminator expects {} values, got {}", self.config.input_len(), x.len())));
        }
        check_finite(x, "discriminator input")?;
        Ok(self.forward(x, 1).outputs().remove(0))
    }

    /// Backpropagates gradients w.r.t. the logits and/or the feature layer.
    /// Parameter gradients are accumulated into `grads` when given; the
    /// input gradient is returned when `want_dx`.
    pub fn backward(
        &self,
        trace: &DiscriminatorTrace<T>,
        d_logits: Option<&[T]>,
        d_features: Option<&[T]>,
        mut grads: Option<&mut ParamSet<T>>,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let nb = trace.nb;
        let p = &self.params;
        let slope = T::from_f64(LEAK);
        let cfg = &self.config;

        let mut d_feat = match d_logits {
            Some(dl) => {
                let mut dh = dense_backward(p.get(8), &trace.hidden, dl, nb, cfg.hidden, split2(&mut grads, 8), true).expect("dx");
                leaky_relu_backward(&trace.hidden, &mut dh, slope);
                dh
            }
            None => vec![T::ZERO; nb * cfg.hidden],
        };
        if let Some(df) = d_features {
            for (a, &b) in d_feat.iter_mut().zip(df) {
                *a += b;
            }
        }
        let mut d = dense_backward(p.get(6), &trace.acts[2], &d_feat, nb, cfg.flat_len(), split2(&mut grads, 6), true).expect("dx");
        let geoms = cfg.geoms();
        for l in (0..3).rev() {
            leaky_relu_backward(&trace.acts[l], &mut d, slope);
            let input = if l == 0 { &trace.input } else { &trace.acts[l - 1] };
            let need_dx = l > 0 || want_dx;
            match conv_backward(&geoms[l], p.get(2 * l), input, &d, nb, split2(&mut grads, 2 * l), need_dx) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }
}

/// Mutable views of the weight/bias pair starting at entry `i`.
pub(crate) fn split2<'a, T: Scalar>(grads: &'a mut Option<&mut ParamSet<T>>, i: usize) -> Option<(&'a mut [T], &'a mut [T])> {
    grads.as_mut().map(|g| {
        let (a, b) = g.entries.split_at_mut(i + 1);
        (a[i].data.as_mut_slice(), b[0].data.as_mut_slice())
    })
}
