use serde::{Deserialize, Serialize};

use super::{images_to_tensor, Model, Sampling, TokenBatch};
use crate::autograd::no_grad;
use crate::data::{Dataset, PAD_ID};
use crate::error::{Error, Result};

const BATCH: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    pub id: usize,
    /// Mean attention of this token to the factor's query.
    pub score: f64,
    /// Score divided by the factor's best score.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConcepts {
    pub factor: usize,
    pub tokens: Vec<TokenScore>,
    /// Dataset ids of the examples with the highest `σ(F(x))` on this factor.
    pub exemplars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptReport {
    pub factors: Vec<FactorConcepts>,
}

/// Ranks vocabulary tokens per latent factor by their average attention
/// weight over every occurrence in `ds`. Dummy tokens, padding and the
/// dummy query never appear in the report.
pub fn concept_candidates(model: &Model, ds: &Dataset, top_k: usize) -> Result<ConceptReport> {
    if ds.is_empty() {
        return Err(Error::contract("concept extraction needs a non-empty dataset"));
    }
    let q = model.config.latent_dim;
    let v = ds.vocab.len();
    let mut sums = vec![0.0; v * q];
    let mut counts = vec![0usize; v];
    let mut reprs = Vec::with_capacity(ds.len() * q);

    for chunk in ds.examples.chunks(BATCH) {
        let seqs: Vec<&[usize]> = chunk.iter().map(|e| e.tokens.as_slice()).collect();
        let tokens = TokenBatch::new(&seqs)?;
        let images: Vec<&[f32]> = chunk.iter().map(|e| e.image.as_slice()).collect();
        let images = images_to_tensor(&images, ds.resolution)?;
        let (text, visual) = no_grad(|| -> Result<_> {
            Ok((
                model.text_forward(&tokens, &mut Sampling::Deterministic)?,
                model.visual_forward(&images, &mut Sampling::Deterministic)?,
            ))
        })?;
        reprs.extend(visual.prob.to_vec());
        let w = text.attention.weights.to_vec();
        let (t, qn) = (text.attention.weights.shape()[1], text.attention.weights.shape()[2]);
        for b in 0..tokens.batch {
            for (j, &tok) in tokens.row(b).iter().enumerate() {
                if tok == PAD_ID {
                    continue;
                }
                counts[tok] += 1;
                let base = (b * t + j) * qn;
                for f in 0..q {
                    sums[tok * q + f] += w[base + f];
                }
            }
        }
    }

    let mut factors = Vec::with_capacity(q);
    for f in 0..q {
        let mut scored: Vec<(usize, f64)> =
            (0..v).filter(|&t| counts[t] > 0).map(|t| (t, sums[t * q + f] / counts[t] as f64)).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let best = scored.first().map(|s| s.1).unwrap_or(0.0);
        let tokens = scored
            .into_iter()
            .take(top_k)
            .map(|(id, score)| TokenScore {
                token: ds.vocab.token(id).unwrap_or("<unk>").to_string(),
                id,
                score,
                psi: if best > 0.0 { score / best } else { 0.0 },
            })
            .collect();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.sort_by(|&a, &b| reprs[b * q + f].total_cmp(&reprs[a * q + f]).then(a.cmp(&b)));
        let exemplars = order.into_iter().take(top_k).map(|i| ds.examples[i].id).collect();
        factors.push(FactorConcepts { factor: f, tokens, exemplars });
    }
    Ok(ConceptReport { factors })
}
