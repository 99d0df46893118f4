//! Training objectives: classification cross-entropy, the Jensen–Shannon
//! tying loss between the two bottlenecks, directional KL variants, and a
//! pairwise-cosine sparsity regularizer for contextualized embeddings.
//!
//! Tying losses treat each bottleneck as a product of independent
//! Bernoullis. Batched inputs `[B, N]` are reduced by a mean over every
//! element, which equals the batch mean of the per-example factor mean.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[TIE_EPS, 1 - TIE_EPS]` before any log.
pub const TIE_EPS: f64 = 1e-6;
/// Added under the square root when normalizing embeddings.
pub const NORM_EPS: f64 = 1e-12;

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::contract(format!("label {y} outside 0..{classes}")));
        }
        data[i * classes + y] = 1.0;
    }
    Tensor::new(data, &[labels.len(), classes])
}

/// Mean of −log softmax(logits)[label] over a `[B, C]` batch.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
        return Err(Error::dim("cross_entropy", format!("logits {s:?} for {} labels", labels.len())));
    }
    let picked = logits.log_softmax()?.mul(&one_hot(labels, s[1])?)?;
    Ok(picked.sum().scale(-1.0 / s[0] as f64))
}

/// Mean per-concept binary cross-entropy on logits, computed as
/// `softplus(x) − x·t` with a stable softplus.
pub fn binary_cross_entropy_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.shape() != targets.shape() {
        return Err(Error::dim(
            "binary_cross_entropy",
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    let abs = logits.relu().add(&logits.neg().relu())?;
    let softplus = logits.relu().add(&abs.neg().exp().add_scalar(1.0).log())?;
    Ok(softplus.sub(&logits.mul(targets)?)?.mean())
}

fn check_pair(op: &'static str, p: &Tensor, q: &Tensor) -> Result<()> {
    if p.shape() != q.shape() || p.numel() == 0 {
        return Err(Error::contract(format!("{op}: shapes {:?} and {:?} differ", p.shape(), q.shape())));
    }
    Ok(())
}

fn clamp_prob(p: &Tensor) -> Tensor {
    p.clamp(TIE_EPS, 1.0 - TIE_EPS)
}

/// Elementwise Bernoulli KL(p‖q) on already clamped inputs.
fn bernoulli_kl(p: &Tensor, q: &Tensor) -> Result<Tensor> {
    let one_minus = |t: &Tensor| t.neg().add_scalar(1.0);
    let pos = p.mul(&p.log().sub(&q.log())?)?;
    let (p1, q1) = (one_minus(p), one_minus(q));
    let neg = p1.mul(&p1.log().sub(&q1.log())?)?;
    pos.add(&neg)
}

/// Cross-modal tying loss: with `m = (c + f) / 2`,
/// `mean_i [KL(cᵢ‖mᵢ) + KL(fᵢ‖mᵢ)]` over Bernoulli factors. This is twice
/// the textbook ½-weighted Jensen–Shannon divergence, bounded by `2·ln 2`.
pub fn js_tie(c_prob: &Tensor, f_prob: &Tensor) -> Result<Tensor> {
    check_pair("js_tie", c_prob, f_prob)?;
    let (c, f) = (clamp_prob(c_prob), clamp_prob(f_prob));
    let m = c.add(&f)?.scale(0.5);
    Ok(bernoulli_kl(&c, &m)?.add(&bernoulli_kl(&f, &m)?)?.mean())
}

/// Mean Bernoulli KL(p‖q) over factors.
pub fn kl_tie(p: &Tensor, q: &Tensor) -> Result<Tensor> {
    check_pair("kl_tie", p, q)?;
    Ok(bernoulli_kl(&clamp_prob(p), &clamp_prob(q))?.mean())
}

/// `(1/n²) Σᵢ Σⱼ cos(rᵢ, rⱼ)` over the rows of `[n, d]`, or the mean of
/// that quantity over the leading axis of `[b, n, d]`. Zero rows have
/// cosine 0 with everything.
pub fn cosine_sparsity(r: &Tensor) -> Result<Tensor> {
    let r3 = match r.shape() {
        [n, d] => r.reshape(&[1, *n, *d])?,
        [_, _, _] => r.clone(),
        s => return Err(Error::dim("cosine_sparsity", format!("expected [n,d] or [b,n,d], got {s:?}"))),
    };
    let d = r3.shape()[2];
    let norms = r3.square().sum_axis(2)?.add_scalar(NORM_EPS).sqrt();
    let shape = r3.shape().to_vec();
    let unit = r3.div(&norms.reshape(&[shape[0], shape[1], 1])?)?;
    debug_assert_eq!(unit.shape()[2], d);
    Ok(unit.matmul(&unit.transpose()?)?.mean())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieKind {
    Js,
    /// KL(f‖c): visual relative to textual.
    KlFc,
    /// KL(c‖f).
    KlCf,
    None,
}

/// Tying term of the requested kind; `None` yields a constant zero.
pub fn tie_loss(kind: TieKind, c_prob: &Tensor, f_prob: &Tensor) -> Result<Tensor> {
    match kind {
        TieKind::Js => js_tie(c_prob, f_prob),
        TieKind::KlFc => kl_tie(f_prob, c_prob),
        TieKind::KlCf => kl_tie(c_prob, f_prob),
        TieKind::None => Ok(Tensor::scalar(0.0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_tie: f64,
    pub lambda_reg: f64,
    /// Fraction of the batch whose r-sets enter the sparsity term.
    pub sparsity_frac: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_tie: 1.0, lambda_reg: 0.1, sparsity_frac: 0.05 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.lambda_tie) || !ok(self.lambda_reg) || !(self.sparsity_frac > 0.0 && self.sparsity_frac <= 1.0) {
            return Err(Error::contract(format!("invalid loss weights {self:?}")));
        }
        Ok(())
    }
}

/// Picks `max(1, round(frac·b))` distinct examples of a `[b, n, d]` batch.
pub fn subsample_rsets(r: &Tensor, frac: f64, rng: &mut impl Rng) -> Result<Tensor> {
    let s = r.shape();
    if s.len() != 3 || s[0] == 0 {
        return Err(Error::dim("subsample_rsets", format!("expected non-empty [b,n,d], got {s:?}")));
    }
    let (b, n, d) = (s[0], s[1], s[2]);
    let k = ((frac * b as f64).round() as usize).clamp(1, b);
    let mut idx = sample(rng, b, k).into_vec();
    idx.sort_unstable();
    let flat = r.reshape(&[b, n * d])?.gather_rows(&idx)?;
    flat.reshape(&[k, n, d])
}

/// Scalar values of every term, for logging. `concept` is the supervised
/// concept loss of CBM and zero for the other models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce_visual: f64,
    pub ce_text: f64,
    pub tie: f64,
    pub sparsity: f64,
    pub concept: f64,
    pub total: f64,
    pub lambda_tie: f64,
    pub lambda_reg: f64,
}

/// Loss terms of one batch as graph nodes.
pub struct LossParts {
    pub ce_visual: Tensor,
    pub ce_text: Option<Tensor>,
    pub tie: Option<Tensor>,
    pub sparsity: Option<Tensor>,
    pub concept: Option<Tensor>,
}

impl LossParts {
    pub fn visual_only(ce_visual: Tensor) -> Self {
        Self { ce_visual, ce_text: None, tie: None, sparsity: None, concept: None }
    }
}

/// `ce_visual + ce_text + λ_tie·tie + λ_reg·sparsity (+ concept)`; absent
/// terms count as zero. Fails if any term is non-finite.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<(Tensor, LossBreakdown)> {
    w.validate()?;
    let mut total = parts.ce_visual.clone();
    let mut add = |t: &Option<Tensor>, weight: f64| -> Result<f64> {
        match t {
            Some(t) => {
                if weight != 0.0 {
                    total = total.add(&t.scale(weight))?;
                }
                Ok(t.item())
            }
            None => Ok(0.0),
        }
    };
    let ce_text = add(&parts.ce_text, 1.0)?;
    let tie = add(&parts.tie, w.lambda_tie)?;
    let sparsity = add(&parts.sparsity, w.lambda_reg)?;
    let concept = add(&parts.concept, 1.0)?;
    let b = LossBreakdown {
        ce_visual: parts.ce_visual.item(),
        ce_text,
        tie,
        sparsity,
        concept,
        total: total.item(),
        lambda_tie: w.lambda_tie,
        lambda_reg: w.lambda_reg,
    };
    if ![b.ce_visual, b.ce_text, b.tie, b.sparsity, b.concept, b.total].iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss term: {b:?}")));
    }
    Ok((total, b))
}
