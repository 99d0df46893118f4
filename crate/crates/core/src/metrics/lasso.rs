use crate::error::{Error, Result};

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 100_000;

/// Solution of `½‖a − Xw − b‖²/N + λ‖w‖₁` with an unpenalized intercept.
///
/// The penalty acts on standardized features (zero mean, unit population
/// variance); `std_weights` are those coefficients and `weights` the same
/// model expressed on the original feature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub std_weights: Vec<f64>,
    pub sweeps: usize,
    /// Objective (standardized problem) after each sweep.
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on the rows of `features` (`N` rows of `L`
/// values). Stops once a full sweep changes no coordinate by more than
/// [`LASSO_TOL`]. Constant columns get weight 0.
pub fn fit_lasso(features: &[Vec<f64>], target: &[f64], lambda: f64) -> Result<LassoFit> {
    let n = features.len();
    if n == 0 || n != target.len() {
        return Err(Error::contract(format!("lasso needs matching non-empty data, got {n} rows and {} targets", target.len())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::contract(format!("lasso penalty must be ≥ 0, got {lambda}")));
    }
    let l = features[0].len();
    if features.iter().any(|r| r.len() != l) {
        return Err(Error::contract("ragged feature matrix"));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..l).map(|j| features.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let scale: Vec<f64> = (0..l)
        .map(|j| (features.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / nf).sqrt())
        .collect();
    let active: Vec<bool> = scale.iter().map(|&s| s > 1e-12).collect();
    // Column-major standardized design.
    let cols: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            if active[j] {
                features.iter().map(|r| (r[j] - mean[j]) / scale[j]).collect()
            } else {
                vec![0.0; n]
            }
        })
        .collect();
    let y_mean = target.iter().sum::<f64>() / nf;
    let mut resid: Vec<f64> = target.iter().map(|y| y - y_mean).collect();
    let mut w = vec![0.0; l];
    let objective = |resid: &[f64], w: &[f64]| {
        0.5 * resid.iter().map(|r| r * r).sum::<f64>() / nf + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut trace = Vec::new();
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in (0..l).filter(|&j| active[j]) {
            let col = &cols[j];
            let rho = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / nf + w[j];
            let new = soft_threshold(rho, lambda);
            let delta = new - w[j];
            if delta != 0.0 {
                resid.iter_mut().zip(col).for_each(|(r, x)| *r -= delta * x);
                w[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        trace.push(objective(&resid, &w));
        if max_change < LASSO_TOL {
            break;
        }
        if sweeps >= LASSO_MAX_SWEEPS {
            let residual = (resid.iter().map(|r| r * r).sum::<f64>() / nf).sqrt();
            return Err(Error::NotConverged { iterations: sweeps, max_change, residual });
        }
    }
    let weights: Vec<f64> = (0..l).map(|j| if active[j] { w[j] / scale[j] } else { 0.0 }).collect();
    let intercept = y_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(LassoFit { weights, intercept, std_weights: w, sweeps, objective_trace: trace })
}
