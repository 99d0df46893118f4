use crate::error::{Error, Result};

/// F1 of every class. A class absent from both predictions and labels
/// scores 0.
pub fn per_class_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("F1 of an empty set"));
    }
    if let Some(&bad) = labels.iter().chain(predictions).find(|&&c| c >= num_classes) {
        return Err(Error::contract(format!("class {bad} outside 0..{num_classes}")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    Ok((0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect())
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    let f = per_class_f1(predictions, labels, num_classes)?;
    Ok(f.iter().sum::<f64>() / num_classes as f64)
}
