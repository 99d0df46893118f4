use super::tensor::{no_grad, Tensor};
use crate::error::{Error, Result};

fn finite_item(t: &Tensor) -> Result<f64> {
    if t.numel() != 1 {
        return Err(Error::contract(format!(
            "grad_check function must return a scalar, got shape {:?}",
            t.shape()
        )));
    }
    let v = t.item();
    if !v.is_finite() {
        return Err(Error::Numeric(format!("grad_check function returned {v}")));
    }
    Ok(v)
}

/// Compares analytic gradients of `f` against central differences.
///
/// Returns the worst `|a − n| / max(|a|, |n|, 1e-8)` over every input
/// coordinate. `f` must be deterministic.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves = inputs
        .iter()
        .map(|t| Tensor::param(t.to_vec(), t.shape()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&leaves)?;
    finite_item(&out)?;
    out.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.numel()]))
        .collect();

    let base: Vec<Vec<f64>> = inputs.iter().map(Tensor::to_vec).collect();
    let eval = |which: usize, coord: usize, delta: f64| -> Result<f64> {
        no_grad(|| {
            let consts = base
                .iter()
                .zip(inputs)
                .enumerate()
                .map(|(i, (vals, t))| {
                    let mut v = vals.clone();
                    if i == which {
                        v[coord] += delta;
                    }
                    Tensor::new(v, t.shape())
                })
                .collect::<Result<Vec<_>>>()?;
            finite_item(&f(&consts)?)
        })
    };

    let mut worst: f64 = 0.0;
    for (i, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let numeric = (eval(i, j, eps)? - eval(i, j, -eps)?) / (2.0 * eps);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
