use rand::Rng;

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::nn::{xavier_uniform, zeros_param};

/// Affine map with weight stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self { weight: xavier_uniform(&[inputs, outputs], rng)?, bias: zeros_param(&[outputs]) })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub(crate) fn named(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![(format!("{prefix}.weight"), self.weight.clone()), (format!("{prefix}.bias"), self.bias.clone())]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Square-kernel convolution followed by ReLU and `pool`×`pool` max pooling.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
    pub pool: usize,
}

impl ConvBlock {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        pool: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if stride == 0 || pool == 0 {
            return Err(Error::contract("conv stride and pool must be positive"));
        }
        Ok(Self {
            weight: xavier_uniform(&[out_ch, in_ch, kernel, kernel], rng)?,
            bias: zeros_param(&[out_ch]),
            stride,
            pad,
            pool,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, &self.bias, self.stride, self.pad)?.relu();
        if self.pool > 1 {
            y.max_pool2d(self.pool)
        } else {
            Ok(y)
        }
    }

    /// Spatial side after this block for a square input of side `side`.
    pub fn out_side(&self, side: usize) -> usize {
        let k = self.weight.shape()[2];
        ((side + 2 * self.pad).saturating_sub(k) / self.stride + 1) / self.pool
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn named(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![(format!("{prefix}.weight"), self.weight.clone()), (format!("{prefix}.bias"), self.bias.clone())]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}
