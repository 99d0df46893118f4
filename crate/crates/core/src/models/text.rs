use rand::Rng;

use super::config::{AttentionActivation, AttentionNorm};
use crate::autograd::Tensor;
use crate::data::PAD_ID;
use crate::error::{Error, Result};
use crate::nn::{sinusoidal_pe, xavier_uniform, zeros_param};

/// Added to per-query column sums before slot rescaling.
pub const SLOT_EPS: f64 = 1e-8;
/// Score bias that removes padded positions under token-axis activation.
const PAD_BIAS: f64 = -1e4;

/// Padded batch of token-id sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    /// `batch × len`, row-major, padded with the pad id.
    pub ids: Vec<usize>,
    pub batch: usize,
    pub len: usize,
    pub lengths: Vec<usize>,
}

impl TokenBatch {
    pub fn new<S: AsRef<[usize]>>(seqs: &[S]) -> Result<Self> {
        let len = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        if seqs.is_empty() || seqs.iter().any(|s| s.as_ref().is_empty()) {
            return Err(Error::contract("token batch needs non-empty sequences"));
        }
        let mut ids = vec![PAD_ID; seqs.len() * len];
        for (row, s) in seqs.iter().enumerate() {
            ids[row * len..row * len + s.as_ref().len()].copy_from_slice(s.as_ref());
        }
        Ok(Self { ids, batch: seqs.len(), len, lengths: seqs.iter().map(|s| s.as_ref().len()).collect() })
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.len..b * self.len + self.lengths[b]]
    }
}

/// Cross-attention weights, token-major `[B, T, Qn]` over the sequence
/// followed by any dummy tokens, and the contextualized embeddings of the
/// concept queries `[B, q, d]` (dummy query excluded).
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub weights: Tensor,
    pub contextual: Tensor,
}

/// Cross-attention of one query set against per-example keys/values.
///
/// `keys`, `values`: `[B, T, d]`; `queries`: `[Qn, d]`; `mask`: `B·T`
/// entries, 0 for padding. Returns token-major weights `[B, T, Qn]` and
/// contextualized embeddings `[B, Qn, d]`.
///
/// Slot mode activates each token's scores across the queries, zeroes
/// padding, then rescales every query column by `1 / (Σ_tokens + ε)`.
/// Regular mode activates each query's scores across the tokens.
pub fn slot_cross_attention(
    keys: &Tensor,
    queries: &Tensor,
    values: &Tensor,
    mask: &[f64],
    activation: AttentionActivation,
    norm: AttentionNorm,
) -> Result<(Tensor, Tensor)> {
    let ks = keys.shape();
    if ks.len() != 3 || values.shape() != ks || queries.ndim() != 2 || queries.shape()[1] != ks[2] {
        return Err(Error::dim(
            "slot_cross_attention",
            format!("keys {ks:?}, values {:?}, queries {:?}", values.shape(), queries.shape()),
        ));
    }
    let (b, t, d) = (ks[0], ks[1], ks[2]);
    if mask.len() != b * t {
        return Err(Error::dim("slot_cross_attention", format!("mask has {} entries for {b}×{t}", mask.len())));
    }
    let qn = queries.shape()[0];
    let act = |s: &Tensor| match activation {
        AttentionActivation::Softmax => s.softmax(),
        AttentionActivation::Entmax15 => s.entmax15(),
    };
    let scores = keys.matmul(&queries.transpose()?)?.scale(1.0 / (d as f64).sqrt());
    match norm {
        AttentionNorm::Slot => {
            let m = Tensor::new(mask.to_vec(), &[b, t, 1])?;
            let per_token = act(&scores)?.mul(&m)?;
            let col = per_token.sum_axis(1)?.add_scalar(SLOT_EPS).reshape(&[b, 1, qn])?;
            let weights = per_token.div(&col)?;
            let r = weights.transpose()?.matmul(values)?;
            Ok((weights, r))
        }
        AttentionNorm::Regular => {
            let bias: Vec<f64> = mask.iter().map(|&m| if m > 0.0 { 0.0 } else { PAD_BIAS }).collect();
            let bias = Tensor::new(bias, &[b, 1, t])?;
            let per_query = act(&scores.transpose()?.add(&bias)?)?;
            let r = per_query.matmul(values)?;
            Ok((per_query.transpose()?, r))
        }
    }
}

/// Concept extractor C: embeddings + positional encoding, key/value
/// projections, a trainable query matrix, and one linear predictor per
/// concept query.
///
/// With dummies enabled the embedding table holds `q` extra rows (ids
/// `vocab_size..vocab_size+q`) appended to every sequence, and the query
/// matrix holds one extra dummy row whose output is discarded.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub embedding: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub queries: Tensor,
    pub factor_weight: Tensor,
    pub factor_bias: Tensor,
    vocab_size: usize,
    latent: usize,
    dummies: bool,
    activation: AttentionActivation,
    norm: AttentionNorm,
}

impl TextEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        vocab_size: usize,
        embed_dim: usize,
        latent: usize,
        dummies: bool,
        activation: AttentionActivation,
        norm: AttentionNorm,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let extra = if dummies { latent } else { 0 };
        Ok(Self {
            embedding: xavier_uniform(&[vocab_size + extra, embed_dim], rng)?,
            key: xavier_uniform(&[embed_dim, embed_dim], rng)?,
            value: xavier_uniform(&[embed_dim, embed_dim], rng)?,
            queries: xavier_uniform(&[latent + usize::from(dummies), embed_dim], rng)?,
            factor_weight: xavier_uniform(&[latent, embed_dim], rng)?,
            factor_bias: zeros_param(&[latent]),
            vocab_size,
            latent,
            dummies,
            activation,
            norm,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.shape()[1]
    }

    /// Number of dummy tokens appended to each sequence.
    pub fn num_dummy_tokens(&self) -> usize {
        if self.dummies {
            self.latent
        } else {
            0
        }
    }

    /// Concept logits `[B, q]` and the attention record.
    pub fn forward(&self, tokens: &TokenBatch) -> Result<(Tensor, AttentionRecord)> {
        if let Some(&bad) = tokens.ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::contract(format!("token id {bad} outside vocabulary of {}", self.vocab_size)));
        }
        let (b, l, d) = (tokens.batch, tokens.len, self.embed_dim());
        let nd = self.num_dummy_tokens();
        let t = l + nd;
        let mut ids = Vec::with_capacity(b * t);
        let mut mask = Vec::with_capacity(b * t);
        for row in 0..b {
            ids.extend_from_slice(&tokens.ids[row * l..(row + 1) * l]);
            mask.extend((0..l).map(|j| if j < tokens.lengths[row] { 1.0 } else { 0.0 }));
            ids.extend((0..nd).map(|j| self.vocab_size + j));
            mask.extend(std::iter::repeat_n(1.0, nd));
        }
        let mut pe = sinusoidal_pe(l, d)?.to_vec();
        pe.resize(t * d, 0.0);
        let pe = Tensor::new(pe, &[t, d])?;
        let x = self.embedding.gather_rows(&ids)?.reshape(&[b, t, d])?.add(&pe)?;
        let keys = x.matmul(&self.key)?;
        let values = x.matmul(&self.value)?;
        let (weights, r) = slot_cross_attention(&keys, &self.queries, &values, &mask, self.activation, self.norm)?;
        let contextual = if self.dummies { r.slice(1, 0, self.latent)? } else { r };
        let logits = contextual.mul(&self.factor_weight)?.sum_axis(2)?.add(&self.factor_bias)?;
        Ok((logits, AttentionRecord { weights, contextual }))
    }

    pub(crate) fn named(&self) -> Vec<(String, Tensor)> {
        vec![
            ("text.embedding".into(), self.embedding.clone()),
            ("text.key".into(), self.key.clone()),
            ("text.value".into(), self.value.clone()),
            ("text.queries".into(), self.queries.clone()),
            ("text.factor.weight".into(), self.factor_weight.clone()),
            ("text.factor.bias".into(), self.factor_bias.clone()),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.embedding,
            &mut self.key,
            &mut self.value,
            &mut self.queries,
            &mut self.factor_weight,
            &mut self.factor_bias,
        ]
    }
}
