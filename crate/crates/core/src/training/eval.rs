use serde::{Deserialize, Serialize};

use crate::autograd::no_grad;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{dci, macro_f1, per_class_f1, DciReport};
use crate::models::{argmax_rows, images_to_tensor, Model, Sampling};

const EVAL_BATCH: usize = 256;

/// Test-split metrics of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub f1: f64,
    pub per_class_f1: Vec<f64>,
    pub dci: DciReport,
    /// `N × L` matrix of `σ(F(x))` on the test split.
    #[serde(skip)]
    pub representation: Vec<Vec<f64>>,
}

fn check_compatible(model: &Model, ds: &Dataset) -> Result<()> {
    let cfg = &model.config;
    if ds.resolution != cfg.resolution {
        return Err(Error::contract(format!(
            "model expects {}px images, dataset has {}px",
            cfg.resolution, ds.resolution
        )));
    }
    if ds.vocab.len() > cfg.vocab_size {
        return Err(Error::contract(format!(
            "dataset vocabulary ({}) exceeds the model's ({})",
            ds.vocab.len(),
            cfg.vocab_size
        )));
    }
    if let Some(bad) = ds.examples.iter().find(|e| e.label >= cfg.num_classes) {
        return Err(Error::contract(format!(
            "example {} has label {} but the model has {} classes",
            bad.id, bad.label, cfg.num_classes
        )));
    }
    Ok(())
}

/// Predictions and representation rows for every example of `ds`.
pub fn predict_dataset(model: &Model, ds: &Dataset) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    check_compatible(model, ds)?;
    let width = model.config.latent_dim;
    let mut preds = Vec::with_capacity(ds.len());
    let mut repr = Vec::with_capacity(ds.len());
    no_grad(|| -> Result<()> {
        for chunk in ds.examples.chunks(EVAL_BATCH) {
            let images: Vec<&[f32]> = chunk.iter().map(|e| e.image.as_slice()).collect();
            let x = images_to_tensor(&images, ds.resolution)?;
            let out = model.visual_forward(&x, &mut Sampling::Deterministic)?;
            preds.extend(argmax_rows(&out.class_logits.to_vec(), model.config.num_classes));
            repr.extend(out.prob.to_vec().chunks(width).map(<[f64]>::to_vec));
        }
        Ok(())
    })?;
    Ok((preds, repr))
}

/// Macro-F1 on `test` and DCI of the representation, with the DCI
/// regressors fitted on `train`. Does not modify the model.
pub fn evaluate(model: &Model, train: &Dataset, test: &Dataset, dci_lambda: f64) -> Result<EvalRecord> {
    if test.is_empty() || train.is_empty() {
        return Err(Error::contract("evaluation needs non-empty train and test sets"));
    }
    let (_, train_repr) = predict_dataset(model, train)?;
    let (preds, test_repr) = predict_dataset(model, test)?;
    let labels = test.labels();
    let k = model.config.num_classes;
    let report = dci(&train_repr, &train.attribute_matrix(), &test_repr, &test.attribute_matrix(), dci_lambda)?;
    Ok(EvalRecord {
        f1: macro_f1(&preds, &labels, k)?,
        per_class_f1: per_class_f1(&preds, &labels, k)?,
        dci: report,
        representation: test_repr,
    })
}
