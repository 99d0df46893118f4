use serde::{Deserialize, Serialize};

use super::lasso::fit_lasso;
use crate::error::{Error, Result};

pub const DEFAULT_DCI_LAMBDA: f64 = 0.01;

/// Disentanglement, completeness and informativeness of a representation
/// with respect to ground-truth attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciReport {
    /// `L × K` non-negative importances (factor rows, attribute columns).
    pub importance: Vec<Vec<f64>>,
    pub disentanglement: f64,
    pub completeness: f64,
    /// Mean normalized test RMSE; lower is better.
    pub informativeness: f64,
    pub per_factor_disentanglement: Vec<f64>,
    pub factor_weights: Vec<f64>,
    pub per_attribute_completeness: Vec<f64>,
    pub per_attribute_informativeness: Vec<f64>,
}

/// `1 − H_base(p)` for a distribution given by non-negative masses; an
/// all-zero vector scores 0 and a base below 2 scores 1.
fn one_minus_entropy(masses: impl Iterator<Item = f64> + Clone, base: usize) -> f64 {
    let total: f64 = masses.clone().sum();
    if total <= 0.0 {
        return 0.0;
    }
    if base < 2 {
        return 1.0;
    }
    let h: f64 = masses.filter(|&m| m > 0.0).map(|m| {
        let p = m / total;
        -p * p.ln()
    }).sum();
    1.0 - h / (base as f64).ln()
}

/// Disentanglement and completeness from an importance matrix alone.
/// Returns `(D, C, per-factor D, factor weights, per-attribute C)`.
pub fn dc_from_importance(r: &[Vec<f64>]) -> Result<(f64, f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let l = r.len();
    let k = r.first().map_or(0, Vec::len);
    if l == 0 || k == 0 || r.iter().any(|row| row.len() != k) {
        return Err(Error::contract("importance matrix must be a non-empty rectangle"));
    }
    if r.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::contract("importances must be finite and non-negative"));
    }
    let total: f64 = r.iter().flatten().sum();
    let d_i: Vec<f64> = r.iter().map(|row| one_minus_entropy(row.iter().copied(), k)).collect();
    let rho: Vec<f64> =
        r.iter().map(|row| if total > 0.0 { row.iter().sum::<f64>() / total } else { 0.0 }).collect();
    let d = d_i.iter().zip(&rho).map(|(d, w)| d * w).sum();
    let c_k: Vec<f64> = (0..k).map(|j| one_minus_entropy(r.iter().map(move |row| row[j]), l)).collect();
    let c = c_k.iter().sum::<f64>() / k as f64;
    Ok((d, c, d_i, rho, c_k))
}

fn column(m: &[Vec<f64>], j: usize) -> Vec<f64> {
    m.iter().map(|r| r[j]).collect()
}

/// Fits one L1 regressor per attribute on the training representation,
/// takes `|standardized weight|` as importance, and scores test RMSE
/// divided by the attribute's test standard deviation (clipped to [0, 1]).
pub fn dci(
    train_repr: &[Vec<f64>],
    train_attr: &[Vec<f64>],
    test_repr: &[Vec<f64>],
    test_attr: &[Vec<f64>],
    lambda: f64,
) -> Result<DciReport> {
    if train_repr.len() != train_attr.len() || test_repr.len() != test_attr.len() || test_repr.is_empty() {
        return Err(Error::contract("representation and attribute rows must match and be non-empty"));
    }
    if train_repr.iter().chain(test_repr).flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite representation value".into()));
    }
    let l = train_repr.first().map_or(0, Vec::len);
    let k = train_attr.first().map_or(0, Vec::len);
    let mut importance = vec![vec![0.0; k]; l];
    let mut info = Vec::with_capacity(k);
    for a in 0..k {
        let y = column(train_attr, a);
        let fit = fit_lasso(train_repr, &y, lambda)?;
        for (i, w) in fit.std_weights.iter().enumerate() {
            importance[i][a] = w.abs();
        }
        let yt = column(test_attr, a);
        let nt = yt.len() as f64;
        let mse = test_repr.iter().zip(&yt).map(|(x, y)| (fit.predict(x) - y).powi(2)).sum::<f64>() / nt;
        let mean = yt.iter().sum::<f64>() / nt;
        let sd = (yt.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / nt).sqrt();
        let ratio = if sd > 0.0 { mse.sqrt() / sd } else if mse > 0.0 { 1.0 } else { 0.0 };
        info.push(ratio.clamp(0.0, 1.0));
    }
    let (d, c, d_i, rho, c_k) = dc_from_importance(&importance)?;
    Ok(DciReport {
        importance,
        disentanglement: d,
        completeness: c,
        informativeness: info.iter().sum::<f64>() / k.max(1) as f64,
        per_factor_disentanglement: d_i,
        factor_weights: rho,
        per_attribute_completeness: c_k,
        per_attribute_informativeness: info,
    })
}

impl DciReport {
    /// Importance matrix as CSV with a header row.
    pub fn importance_csv(&self) -> String {
        let k = self.importance.first().map_or(0, Vec::len);
        let mut s = String::from("factor");
        (0..k).for_each(|j| s.push_str(&format!(",attr{j}")));
        s.push('\n');
        for (i, row) in self.importance.iter().enumerate() {
            s.push_str(&i.to_string());
            row.iter().for_each(|v| s.push_str(&format!(",{v}")));
            s.push('\n');
        }
        s
    }
}
