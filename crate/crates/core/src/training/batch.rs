use crate::autograd::Tensor;
use crate::data::{Dataset, ShapesExample};
use crate::error::Result;
use crate::losses::{
    binary_cross_entropy_with_logits, cosine_sparsity, cross_entropy, subsample_rsets, tie_loss, total_loss,
    LossBreakdown, LossParts, LossWeights,
};
use crate::models::{images_to_tensor, Model, ModelKind, Sampling, TokenBatch};
use crate::rng::Rng;

/// Model-ready view of a set of examples.
pub struct Batch {
    pub images: Tensor,
    pub tokens: TokenBatch,
    pub labels: Vec<usize>,
    pub attributes: Tensor,
}

impl Batch {
    pub fn new(examples: &[&ShapesExample], resolution: usize) -> Result<Self> {
        let images: Vec<&[f32]> = examples.iter().map(|e| e.image.as_slice()).collect();
        let seqs: Vec<&[usize]> = examples.iter().map(|e| e.tokens.as_slice()).collect();
        let k = examples.first().map_or(0, |e| e.attributes.len());
        let attrs: Vec<f64> = examples.iter().flat_map(|e| e.attributes.iter().map(|&a| a as f64)).collect();
        Ok(Self {
            images: images_to_tensor(&images, resolution)?,
            tokens: TokenBatch::new(&seqs)?,
            labels: examples.iter().map(|e| e.label).collect(),
            attributes: Tensor::new(attrs, &[examples.len(), k])?,
        })
    }

    pub fn from_indices(ds: &Dataset, idx: &[usize]) -> Result<Self> {
        let ex: Vec<&ShapesExample> = idx.iter().map(|&i| &ds.examples[i]).collect();
        Self::new(&ex, ds.resolution)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// How the sparsity term picks r-sets.
pub enum SparsitySample<'a> {
    /// Random fraction of the batch (training).
    Random(&'a mut Rng),
    /// Every example (deterministic evaluation).
    All,
}

/// Objective of one batch plus the visual class scores it produced.
pub struct BatchLoss {
    pub loss: Tensor,
    pub breakdown: LossBreakdown,
    pub class_logits: Tensor,
}

/// Builds the model's training objective on `batch`.
///
/// Standard: `CE(ŷ_f)`. CBM: `CE(ŷ) + BCE(concepts, attributes)`. XCB:
/// both cross-entropies, the tie between `σ(F(x))` and `σ(C(s))`, and the
/// r-set sparsity term; with `with_text = false` only the visual
/// cross-entropy is formed and the text branch is not run.
pub fn batch_loss(
    model: &Model,
    batch: &Batch,
    weights: &LossWeights,
    sampling: &mut Sampling<'_>,
    sparsity: SparsitySample<'_>,
    with_text: bool,
) -> Result<BatchLoss> {
    let visual = model.visual_forward(&batch.images, sampling)?;
    let ce_visual = cross_entropy(&visual.class_logits, &batch.labels)?;
    let mut parts = LossParts::visual_only(ce_visual);
    match model.kind() {
        ModelKind::Standard => {}
        ModelKind::Cbm => {
            parts.concept = Some(binary_cross_entropy_with_logits(&visual.logits, &batch.attributes)?);
        }
        ModelKind::Xcb if with_text => {
            let text = model.text_forward(&batch.tokens, sampling)?;
            parts.ce_text = Some(cross_entropy(&text.branch.class_logits, &batch.labels)?);
            if weights.lambda_tie > 0.0 {
                parts.tie = Some(tie_loss(model.config.tie, &text.branch.prob, &visual.prob)?);
            }
            if model.config.sparsity_reg && weights.lambda_reg > 0.0 {
                let r = &text.attention.contextual;
                let chosen = match sparsity {
                    SparsitySample::Random(rng) => subsample_rsets(r, weights.sparsity_frac, rng)?,
                    SparsitySample::All => r.clone(),
                };
                parts.sparsity = Some(cosine_sparsity(&chosen)?);
            }
        }
        ModelKind::Xcb => {}
    }
    let (loss, breakdown) = total_loss(&parts, weights)?;
    Ok(BatchLoss { loss, breakdown, class_logits: visual.class_logits })
}
