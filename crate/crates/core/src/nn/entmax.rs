use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Fixed α of the sparse attention activation.
pub const ENTMAX_ALPHA: f64 = 1.5;

/// 1.5-entmax along `axis` (the last or second-to-last axis).
///
/// Output rows are non-negative, sum to one, and may contain exact zeros.
/// The backward pass uses the closed-form Jacobian.
pub fn entmax15(scores: &Tensor, axis: usize) -> Result<Tensor> {
    let nd = scores.ndim();
    if nd == 0 || axis >= nd {
        return Err(Error::dim("entmax15", format!("axis {axis} invalid for {:?}", scores.shape())));
    }
    if axis == nd - 1 {
        scores.entmax15()
    } else if axis + 2 == nd {
        scores.transpose()?.entmax15()?.transpose()
    } else {
        Err(Error::dim("entmax15", "only the last two axes are supported"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent threshold solve: Σ max(z/2 − τ, 0)² = 1 by bisection.
    fn bisection_oracle(z: &[f64]) -> Vec<f64> {
        let half: Vec<f64> = z.iter().map(|v| v / 2.0).collect();
        let max = half.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mass = |tau: f64| half.iter().map(|v| (v - tau).max(0.0).powi(2)).sum::<f64>();
        let (mut lo, mut hi) = (max - 1.0, max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) >= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        half.iter().map(|v| (v - tau).max(0.0).powi(2)).collect()
    }

    fn entmax_vec(z: &[f64]) -> Vec<f64> {
        Tensor::new(z.to_vec(), &[z.len()]).unwrap().entmax15().unwrap().to_vec()
    }

    #[test]
    fn closed_form_cases() {
        // τ* = (1 − √7)/4 solves 2τ² − τ − 0.75 = 0 for z = [1, 0]
        let tau = (1.0 - 7f64.sqrt()) / 4.0;
        let expect = [(0.5 - tau).powi(2), (0.0 - tau).powi(2)];
        let got = entmax_vec(&[1.0, 0.0]);
        assert!((got[0] - expect[0]).abs() < 1e-12 && (got[1] - expect[1]).abs() < 1e-12);
        assert_eq!(entmax_vec(&[4.0, 0.0]), vec![1.0, 0.0]);
        assert!(entmax_vec(&[0.0, 0.0]).iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn axis_selection() {
        let s = Tensor::new(vec![4.0, 0.0, 0.0, 0.0], &[2, 2]).unwrap();
        let cols = entmax15(&s, 0).unwrap().to_vec();
        for (a, b) in cols.iter().zip([1.0, 0.5, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(entmax15(&s, 2).is_err());
    }

    proptest! {
        #[test]
        fn matches_bisection(z in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            let got = entmax_vec(&z);
            let want = bisection_oracle(&z);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-8, "{got:?} vs {want:?}");
            }
        }

        #[test]
        fn simplex_and_sparser_than_softmax(z in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            let p = entmax_vec(&z);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let support = p.iter().filter(|&&v| v > 0.0).count();
            prop_assert!(support <= z.len());
        }

        #[test]
        fn permutation_equivariant(z in prop::collection::vec(-5.0f64..5.0, 2..10), rot in 0usize..10) {
            let r = rot % z.len();
            let mut zr = z.clone();
            zr.rotate_left(r);
            let mut p = entmax_vec(&z);
            p.rotate_left(r);
            let pr = entmax_vec(&zr);
            for (a, b) in p.iter().zip(&pr) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn backward_matches_finite_differences(z in prop::collection::vec(-3.0f64..3.0, 2..8)) {
            // skip points where a coordinate sits near the support boundary
            let half: Vec<f64> = z.iter().map(|v| v / 2.0).collect();
            let p = entmax_vec(&z);
            let tau = half.iter().zip(&p).find(|(_, &pi)| pi > 0.0).map(|(h, pi)| h - pi.sqrt()).unwrap();
            prop_assume!(half.iter().all(|h| (h - tau).abs() > 1e-3));
            let w: Vec<f64> = (0..z.len()).map(|i| 0.5 + i as f64 * 0.3).collect();
            let wt = Tensor::new(w, &[z.len()]).unwrap();
            let x = Tensor::new(z.clone(), &[z.len()]).unwrap();
            let err = crate::grad_check(|v| Ok(v[0].entmax15()?.mul(&wt)?.sum()), &[x], 1e-6).unwrap();
            prop_assert!(err < 1e-4, "error {err}");
        }
    }
}
