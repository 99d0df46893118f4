use rand::Rng;

use super::layers::{ConvBlock, Linear};
use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Feature extractor F: conv–ReLU–pool blocks, flatten, linear to N logits.
///
/// The first block uses a stride-2 4×4 kernel to bring the canvas down
/// quickly; later blocks are 3×3, stride 1.
#[derive(Debug, Clone)]
pub struct VisualEncoder {
    pub blocks: Vec<ConvBlock>,
    pub head: Linear,
    resolution: usize,
    mean: [f64; 3],
    std: [f64; 3],
}

impl VisualEncoder {
    pub fn new(
        resolution: usize,
        channels: &[usize],
        latent: usize,
        mean: [f64; 3],
        std: [f64; 3],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(channels.len());
        let (mut side, mut in_ch) = (resolution, 3);
        for (i, &ch) in channels.iter().enumerate() {
            let block = if i == 0 {
                ConvBlock::new(in_ch, ch, 4, 2, 1, 2, rng)?
            } else {
                ConvBlock::new(in_ch, ch, 3, 1, 1, 2, rng)?
            };
            side = block.out_side(side);
            if side == 0 {
                return Err(Error::contract(format!("{} conv blocks collapse a {resolution}px input", channels.len())));
            }
            in_ch = ch;
            blocks.push(block);
        }
        let head = Linear::new(in_ch * side * side, latent, rng)?;
        Ok(Self { blocks, head, resolution, mean, std })
    }

    /// Raw `[B, 3, H, W]` images in [0, 1] → `[B, N]` logits.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        let s = images.shape();
        if s.len() != 4 || s[1] != 3 || s[2] != self.resolution || s[3] != self.resolution {
            return Err(Error::contract(format!(
                "visual encoder expects [B, 3, {r}, {r}] images, got {s:?}",
                r = self.resolution
            )));
        }
        let mean = Tensor::new(self.mean.to_vec(), &[3, 1, 1])?;
        let inv_std = Tensor::new(self.std.iter().map(|s| 1.0 / s).collect(), &[3, 1, 1])?;
        let mut x = images.sub(&mean)?.mul(&inv_std)?;
        for b in &self.blocks {
            x = b.forward(&x)?;
        }
        let batch = x.shape()[0];
        let flat = x.numel() / batch.max(1);
        self.head.forward(&x.reshape(&[batch, flat])?)
    }

    pub(crate) fn named(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<_> = self.blocks.iter().enumerate().flat_map(|(i, b)| b.named(&format!("visual.conv{i}"))).collect();
        out.extend(self.head.named("visual.head"));
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.blocks.iter_mut().flat_map(ConvBlock::tensors_mut).collect();
        out.extend(self.head.tensors_mut());
        out
    }
}
