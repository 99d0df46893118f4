//! Standard, CBM and XCB classifiers, concept extraction, and checkpoints.

mod checkpoint;
mod concepts;
mod config;
mod layers;
mod text;
mod visual;

pub use checkpoint::{load_checkpoint, read_checkpoint_config, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use concepts::{concept_candidates, ConceptReport, FactorConcepts, TokenScore};
pub use config::{AttentionActivation, AttentionNorm, BottleneckActivation, ModelConfig, ModelKind};
pub use layers::{ConvBlock, Linear};
pub use text::{slot_cross_attention, AttentionRecord, TextEncoder, TokenBatch, SLOT_EPS};
pub use visual::VisualEncoder;

use crate::autograd::{no_grad, Tensor};
use crate::error::{Error, Result};
use crate::nn::gumbel_sigmoid;
use crate::rng::{stream, streams, Rng};

/// How discrete bottlenecks are produced on a forward pass.
pub enum Sampling<'a> {
    /// Noise-free: hard bits are `σ(logit) > 0.5`.
    Deterministic,
    /// Straight-through Gumbel-sigmoid at temperature `tau`.
    Stochastic { tau: f64, rng: &'a mut Rng },
}

/// Outputs of one branch. `prob` is σ(logits); `bottleneck` is what the
/// predictor consumed; `class_logits` are the label scores.
#[derive(Debug, Clone)]
pub struct BranchOutput {
    pub logits: Tensor,
    pub prob: Tensor,
    pub bottleneck: Tensor,
    pub class_logits: Tensor,
}

#[derive(Debug, Clone)]
pub struct TextOutput {
    pub branch: BranchOutput,
    pub attention: AttentionRecord,
}

/// Visual encoder F with predictor P_f, and for XCB the concept extractor C
/// with predictor P_c.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub visual: VisualEncoder,
    pub visual_head: Linear,
    pub text: Option<TextEncoder>,
    pub text_head: Option<Linear>,
}

impl Model {
    /// Xavier-initialised model. The visual branch draws from its own
    /// stream, so standard and XCB models built from the same seed share
    /// identical F and P_f weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut vrng = stream(seed, streams::VISUAL_INIT);
        let visual = VisualEncoder::new(
            config.resolution,
            &config.conv_channels,
            config.latent_dim,
            config.input_mean,
            config.input_std,
            &mut vrng,
        )?;
        let visual_head = Linear::new(config.latent_dim, config.num_classes, &mut vrng)?;
        let (text, text_head) = if config.kind == ModelKind::Xcb {
            let mut trng = stream(seed, streams::TEXT_INIT);
            let enc = TextEncoder::new(
                config.vocab_size,
                config.embed_dim,
                config.latent_dim,
                config.dummies,
                config.attention,
                config.normalization,
                &mut trng,
            )?;
            let head = Linear::new(config.latent_dim, config.num_classes, &mut trng)?;
            (Some(enc), Some(head))
        } else {
            (None, None)
        };
        Ok(Self { config, visual, visual_head, text, text_head })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// F and P_f parameters.
    pub fn visual_params(&self) -> Vec<(String, Tensor)> {
        let mut p = self.visual.named();
        p.extend(self.visual_head.named("visual.predictor"));
        p
    }

    /// C and P_c parameters (empty for non-XCB models).
    pub fn text_params(&self) -> Vec<(String, Tensor)> {
        let mut p = self.text.as_ref().map(TextEncoder::named).unwrap_or_default();
        if let Some(h) = &self.text_head {
            p.extend(h.named("text.predictor"));
        }
        p
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut p = self.visual_params();
        p.extend(self.text_params());
        p
    }

    /// Copy of the model whose parameters are `params`, given in
    /// [`Model::named_params`] order.
    pub fn with_params(&self, params: &[Tensor]) -> Result<Model> {
        let mut m = self.clone();
        let mut slots: Vec<&mut Tensor> = m.visual.tensors_mut();
        slots.extend(m.visual_head.tensors_mut());
        if let Some(t) = m.text.as_mut() {
            slots.extend(t.tensors_mut());
        }
        if let Some(h) = m.text_head.as_mut() {
            slots.extend(h.tensors_mut());
        }
        if slots.len() != params.len() {
            return Err(Error::contract(format!("model has {} parameters, got {}", slots.len(), params.len())));
        }
        for (slot, p) in slots.into_iter().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::dim("with_params", format!("{:?} vs {:?}", slot.shape(), p.shape())));
            }
            *slot = p.clone();
        }
        Ok(m)
    }

    fn bottleneck(&self, logits: &Tensor, sampling: &mut Sampling<'_>) -> Result<(Tensor, Tensor)> {
        let prob = logits.sigmoid();
        let value = match (self.config.kind, self.config.bottleneck) {
            (ModelKind::Standard, _) | (ModelKind::Xcb, BottleneckActivation::Sigmoid) => prob.clone(),
            (ModelKind::Cbm, _) => logits.clone(),
            (ModelKind::Xcb, BottleneckActivation::GumbelSigmoid) => match sampling {
                Sampling::Deterministic => prob.straight_through(0.5),
                Sampling::Stochastic { tau, rng } => gumbel_sigmoid(logits, *tau, &mut **rng, true)?,
            },
        };
        Ok((prob, value))
    }

    /// Visual path: `f = bottleneck(F(x))`, `ŷ_f = P_f(f)`.
    ///
    /// Standard models use `σ(F(x))`; CBM feeds raw concept logits to its
    /// label head; XCB discretizes with the configured activation.
    pub fn visual_forward(&self, images: &Tensor, sampling: &mut Sampling<'_>) -> Result<BranchOutput> {
        let logits = self.visual.forward(images)?;
        let (prob, bottleneck) = self.bottleneck(&logits, sampling)?;
        let class_logits = self.visual_head.forward(&bottleneck)?;
        Ok(BranchOutput { logits, prob, bottleneck, class_logits })
    }

    /// Text path of XCB: `c = bottleneck(C(s))`, `ŷ_c = P_c(c)`.
    pub fn text_forward(&self, tokens: &TokenBatch, sampling: &mut Sampling<'_>) -> Result<TextOutput> {
        let (Some(enc), Some(head)) = (&self.text, &self.text_head) else {
            return Err(Error::contract(format!("{} model has no text branch", self.config.kind.name())));
        };
        let (logits, attention) = enc.forward(tokens)?;
        let (prob, bottleneck) = self.bottleneck(&logits, sampling)?;
        let class_logits = head.forward(&bottleneck)?;
        Ok(TextOutput { branch: BranchOutput { logits, prob, bottleneck, class_logits }, attention })
    }

    /// Label scores of the inference path (no text, no noise).
    pub fn class_scores(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.visual_forward(images, &mut Sampling::Deterministic)?.class_logits)
    }

    /// Argmax predictions, evaluated without recording a graph.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let scores = no_grad(|| self.class_scores(images))?;
        Ok(argmax_rows(&scores.to_vec(), self.config.num_classes))
    }

    /// Per-example representation `σ(F(x))`, `[B, N]` row-major.
    pub fn representation(&self, images: &Tensor) -> Result<Vec<f64>> {
        let out = no_grad(|| self.visual_forward(images, &mut Sampling::Deterministic))?;
        Ok(out.prob.to_vec())
    }
}

pub fn argmax_rows(values: &[f64], width: usize) -> Vec<usize> {
    values
        .chunks(width)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Stacks H×W×3 images into a `[B, 3, H, W]` tensor.
pub fn images_to_tensor<I: AsRef<[f32]>>(images: &[I], resolution: usize) -> Result<Tensor> {
    let plane = resolution * resolution;
    let mut data = vec![0.0; images.len() * 3 * plane];
    for (b, img) in images.iter().enumerate() {
        let img = img.as_ref();
        if img.len() != 3 * plane {
            return Err(Error::contract(format!("image {b} has {} values, expected {}", img.len(), 3 * plane)));
        }
        let out = &mut data[b * 3 * plane..(b + 1) * 3 * plane];
        for (p, px) in img.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = px[c] as f64;
            }
        }
    }
    Tensor::new(data, &[images.len(), 3, resolution, resolution])
}
