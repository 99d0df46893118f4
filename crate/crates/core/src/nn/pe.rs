use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Sinusoidal position table `[seq_len, dim]`: even channels sin, odd cos,
/// with wavelengths growing geometrically up to 10000·2π.
pub fn sinusoidal_pe(seq_len: usize, dim: usize) -> Result<Tensor> {
    if !dim.is_multiple_of(2) || dim == 0 {
        return Err(Error::contract(format!("positional encoding width must be even and non-zero, got {dim}")));
    }
    let mut data = vec![0.0; seq_len * dim];
    for pos in 0..seq_len {
        for i in 0..dim / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            let angle = pos as f64 * freq;
            data[pos * dim + 2 * i] = angle.sin();
            data[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(data, &[seq_len, dim])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero() {
        let pe = sinusoidal_pe(4, 6).unwrap();
        let row0 = &pe.data()[..6];
        assert_eq!(row0, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn bounded_and_pure() {
        let a = sinusoidal_pe(10, 50).unwrap();
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(a.to_vec(), sinusoidal_pe(10, 50).unwrap().to_vec());
    }

    #[test]
    fn odd_width_rejected() {
        assert!(sinusoidal_pe(3, 5).is_err());
    }
}
