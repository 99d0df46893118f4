use rand::Rng;

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Uniform draws are kept away from 0 and 1 so the logistic noise stays finite.
pub const NOISE_CLAMP: f64 = 1e-6;

pub fn logistic_noise(u: f64) -> f64 {
    let u = u.clamp(NOISE_CLAMP, 1.0 - NOISE_CLAMP);
    u.ln() - (1.0 - u).ln()
}

/// Relaxed Bernoulli sample σ((logits + g) / τ) with logistic noise
/// g = log u − log(1 − u). With `hard`, the forward value is binarised by
/// a straight-through step.
pub fn gumbel_sigmoid(logits: &Tensor, tau: f64, rng: &mut impl Rng, hard: bool) -> Result<Tensor> {
    let u: Vec<f64> = (0..logits.numel()).map(|_| rng.gen::<f64>()).collect();
    gumbel_sigmoid_with_uniform(logits, tau, &u, hard)
}

/// Same as [`gumbel_sigmoid`] with the uniform draws supplied by the caller.
pub fn gumbel_sigmoid_with_uniform(logits: &Tensor, tau: f64, uniform: &[f64], hard: bool) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!("gumbel temperature must be > 0, got {tau}")));
    }
    if uniform.len() != logits.numel() {
        return Err(Error::dim(
            "gumbel_sigmoid",
            format!("{} uniform draws for {:?} logits", uniform.len(), logits.shape()),
        ));
    }
    let noise = Tensor::new(uniform.iter().map(|&u| logistic_noise(u)).collect(), logits.shape())?;
    let soft = logits.add(&noise)?.scale(1.0 / tau).sigmoid();
    Ok(if hard { soft.straight_through(0.5) } else { soft })
}
