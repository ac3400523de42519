use serde::{Deserialize, Serialize};

use super::discriminator::split2;
use super::{fingerprint, init_layout, Architecture, NoisePrior, LEAK};
use crate::error::{Error, Result};
use crate::nn::act::{leaky_relu, leaky_relu_backward, tanh, tanh_backward};
use crate::nn::conv::{conv_backward, conv_forward, deconv_backward, deconv_forward, ConvGeom};
use crate::nn::dense::{dense_backward, dense_forward};
use crate::nn::{ParamSet, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub noise_dim: usize,
    #[serde(default)]
    pub noise_prior: NoisePrior,
    /// Height, width and channels of the reshaped dense output.
    pub base: [usize; 3],
    pub deconv_kernel: usize,
    pub deconv_channels: usize,
    pub out_kernel: usize,
    pub height: usize,
    pub width: usize,
}

impl GeneratorConfig {
    pub fn standard() -> Self {
        Self {
            noise_dim: 100,
            noise_prior: NoisePrior::Uniform,
            base: [10, 37, 64],
            deconv_kernel: 4,
            deconv_channels: 32,
            out_kernel: 7,
            height: 20,
            width: 74,
        }
    }

    pub fn mini() -> Self {
        Self {
            noise_dim: 6,
            noise_prior: NoisePrior::Uniform,
            base: [3, 5, 4],
            deconv_kernel: 4,
            deconv_channels: 4,
            out_kernel: 3,
            height: 6,
            width: 10,
        }
    }

    pub fn output_len(&self) -> usize {
        self.height * self.width
    }

    pub fn base_len(&self) -> usize {
        self.base.iter().product()
    }

    /// Upsampling stage, described as the convolution it is the adjoint of.
    pub fn deconv_geom(&self) -> ConvGeom {
        ConvGeom::same(self.height, self.width, self.deconv_channels, self.base[2], self.deconv_kernel, self.deconv_kernel, 2)
    }

    pub fn out_geom(&self) -> ConvGeom {
        ConvGeom::same(self.height, self.width, self.deconv_channels, 1, self.out_kernel, self.out_kernel, 1)
    }

    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let up = self.deconv_geom();
        let out = self.out_geom();
        vec![
            ("dense.w", vec![self.noise_dim, self.base_len()]),
            ("dense.b", vec![self.base_len()]),
            ("deconv.w", up.weight_shape()),
            ("deconv.b", vec![self.deconv_channels]),
            ("out.w", out.weight_shape()),
            ("out.b", vec![1]),
        ]
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(Architecture::Generator, self)
    }

    pub fn validate(&self) -> Result<()> {
        let up = self.deconv_geom();
        if (up.out_h, up.out_w) != (self.base[0], self.base[1]) {
            return Err(Error::Config(format!(
                "generator base {}x{} does not upsample to {}x{} with stride 2",
                self.base[0], self.base[1], self.height, self.width
            )));
        }
        if self.noise_dim == 0 || self.base[2] == 0 || self.deconv_channels == 0 {
            return Err(Error::Config("generator dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorTrace<T> {
    pub nb: usize,
    z: Vec<T>,
    base: Vec<T>,
    mid: Vec<T>,
    /// `nb` samples of `height * width` values in (-1, 1).
    pub output: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub config: GeneratorConfig,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn init(config: GeneratorConfig, seed: u64) -> Self {
        let params = init_layout(Architecture::Generator, &config.layout(), seed);
        Self { config, params }
    }

    pub fn from_params(config: GeneratorConfig, params: ParamSet<T>) -> Result<Self> {
        params.check_layout(&ParamSet::zeros(&config.layout()), "generator")?;
        Ok(Self { config, params })
    }

    pub fn forward(&self, z: &[T], nb: usize) -> GeneratorTrace<T> {
        let cfg = &self.config;
        assert_eq!(z.len(), nb * cfg.noise_dim, "generator noise shape");
        let p = &self.params;
        let slope = T::from_f64(LEAK);
        let mut base = dense_forward(p.get(0), p.get(1), z, nb, cfg.noise_dim);
        leaky_relu(&mut base, slope);
        let mut mid = deconv_forward(&cfg.deconv_geom(), p.get(2), p.get(3), &base, nb);
        leaky_relu(&mut mid, slope);
        let mut output = conv_forward(&cfg.out_geom(), p.get(4), p.get(5), &mid, nb);
        tanh(&mut output);
        GeneratorTrace {
            nb,
            z: z.to_vec(),
            base,
            mid,
            output,
        }
    }

    /// Accumulates parameter gradients for an upstream gradient on the
    /// generated samples.
    pub fn backward(&self, trace: &GeneratorTrace<T>, d_output: &[T], grads: &mut ParamSet<T>) {
        let cfg = &self.config;
        let p = &self.params;
        let nb = trace.nb;
        let slope = T::from_f64(LEAK);
        let mut grads = Some(grads);
        let mut d = d_output.to_vec();
        tanh_backward(&trace.output, &mut d);
        let mut d = conv_backward(&cfg.out_geom(), p.get(4), &trace.mid, &d, nb, split2(&mut grads, 4), true).expect("dx");
        leaky_relu_backward(&trace.mid, &mut d, slope);
        let mut d = deconv_backward(&cfg.deconv_geom(), p.get(2), &trace.base, &d, nb, split2(&mut grads, 2), true).expect("dx");
        leaky_relu_backward(&trace.base, &mut d, slope);
        dense_backward(p.get(0), &trace.z, &d, nb, cfg.noise_dim, split2(&mut grads, 0), false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configs_validate() {
        GeneratorConfig::standard().validate().unwrap();
        GeneratorConfig::mini().validate().unwrap();
        let mut bad = GeneratorConfig::standard();
        bad.base = [9, 37, 64];
        assert!(bad.validate().is_err());
        assert_eq!(GeneratorConfig::standard().output_len(), 1480);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut g = Generator::<f64>::init(GeneratorConfig::mini(), 3);
        for e in &mut g.params.entries {
            e.data.fill(0.0);
        }
        let t = g.forward(&[0.5; 12], 2);
        assert!(t.output.iter().all(|&v| v == 0.0));
    }
}
