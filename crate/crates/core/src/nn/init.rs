use rand::Rng;

use crate::autograd::Tensor;
use crate::error::{Error, Result};

fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, *n),
        [a, b] => (*a, *b),
        [out, inp, rest @ ..] => {
            let rf: usize = rest.iter().product();
            (inp * rf, out * rf)
        }
        [] => (0, 0),
    }
}

/// Trainable tensor drawn from U(±√(6 / (fan_in + fan_out))).
///
/// Linear weights are stored `[in, out]`; convolution kernels
/// `[out, in, k, k]` take the receptive field into both fans.
pub fn xavier_uniform(shape: &[usize], rng: &mut impl Rng) -> Result<Tensor> {
    let (fan_in, fan_out) = fans(shape);
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::contract(format!("xavier init needs non-zero fans, got shape {shape:?}")));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::param(data, shape)
}

pub fn zeros_param(shape: &[usize]) -> Tensor {
    Tensor::param(vec![0.0; shape.iter().product()], shape).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn bounded_by_formula() {
        let t = xavier_uniform(&[100, 100], &mut stream(1, 0)).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert!((bound - 0.1732).abs() < 1e-4);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        assert!(t.requires_grad());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = xavier_uniform(&[8, 3, 3, 3], &mut stream(5, 1)).unwrap();
        let b = xavier_uniform(&[8, 3, 3, 3], &mut stream(5, 1)).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn empirical_mean_near_zero() {
        let t = xavier_uniform(&[100, 100], &mut stream(2, 0)).unwrap();
        let mean = t.data().iter().sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn zero_fan_rejected() {
        assert!(xavier_uniform(&[0, 4], &mut stream(0, 0)).is_err());
        assert!(xavier_uniform(&[], &mut stream(0, 0)).is_err());
    }
}
