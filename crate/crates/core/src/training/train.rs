use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::{batch_loss, Batch, SparsitySample};
use super::config::TrainConfig;
use crate::autograd::no_grad;
use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::metrics::macro_f1;
use crate::models::{argmax_rows, Model, ModelConfig, ModelKind, Sampling};
use crate::nn::{OneCycle, Optimizer};
use crate::rng::{stream, streams};

const EVAL_BATCH: usize = 256;

/// Per-channel mean and standard deviation of a dataset's images.
pub fn channel_stats(ds: &Dataset) -> ([f64; 3], [f64; 3]) {
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut n = 0usize;
    for e in &ds.examples {
        for px in e.image.chunks_exact(3) {
            for c in 0..3 {
                let v = px[c] as f64;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        n += e.image.len() / 3;
    }
    let n = n.max(1) as f64;
    let mean = sum.map(|s| s / n);
    let mut std = [1.0; 3];
    for c in 0..3 {
        let var = sq[c] / n - mean[c] * mean[c];
        std[c] = if var > 1e-12 { var.sqrt() } else { 1.0 };
    }
    (mean, std)
}

/// Metrics of one epoch on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: LossBreakdown,
    pub f1: f64,
    pub tau: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub mean_epoch_seconds: f64,
    pub epochs_run: usize,
    pub steps: usize,
}

/// Result of [`train`]: the model restored to its best validation epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub config: TrainConfig,
    pub model: Model,
    pub log: Vec<EpochRecord>,
    /// Training loss of every optimization step, in order.
    pub step_losses: Vec<LossBreakdown>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub timings: Timings,
}

/// Loss and macro-F1 of `model` on `ds` without noise or graph recording.
pub fn evaluate_loss(model: &Model, ds: &Dataset, cfg: &TrainConfig) -> Result<(LossBreakdown, f64)> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut acc = LossBreakdown::default();
    let mut preds = Vec::with_capacity(ds.len());
    let mut seen = 0usize;
    no_grad(|| -> Result<()> {
        for chunk in idx.chunks(EVAL_BATCH) {
            let batch = Batch::from_indices(ds, chunk)?;
            let out = batch_loss(model, &batch, &cfg.loss, &mut Sampling::Deterministic, SparsitySample::All, true)?;
            accumulate(&mut acc, &out.breakdown, chunk.len() as f64);
            preds.extend(argmax_rows(&out.class_logits.to_vec(), model.config.num_classes));
            seen += chunk.len();
        }
        Ok(())
    })?;
    scale(&mut acc, 1.0 / seen.max(1) as f64);
    let f1 = macro_f1(&preds, &ds.labels(), model.config.num_classes)?;
    Ok((acc, f1))
}

fn accumulate(acc: &mut LossBreakdown, b: &LossBreakdown, w: f64) {
    acc.ce_visual += w * b.ce_visual;
    acc.ce_text += w * b.ce_text;
    acc.tie += w * b.tie;
    acc.sparsity += w * b.sparsity;
    acc.concept += w * b.concept;
    acc.total += w * b.total;
    acc.lambda_tie = b.lambda_tie;
    acc.lambda_reg = b.lambda_reg;
}

fn scale(acc: &mut LossBreakdown, f: f64) {
    acc.ce_visual *= f;
    acc.ce_text *= f;
    acc.tie *= f;
    acc.sparsity *= f;
    acc.concept *= f;
    acc.total *= f;
}

fn snapshot(model: &Model) -> Vec<Vec<f64>> {
    model.named_params().iter().map(|(_, t)| t.to_vec()).collect()
}

fn restore(model: &Model, values: &[Vec<f64>]) -> Result<()> {
    for ((_, t), v) in model.named_params().iter().zip(values) {
        t.set_data(v)?;
    }
    Ok(())
}

/// Builds the model for `cfg` with normalization statistics taken from the
/// training split.
pub fn build_model(cfg: &TrainConfig, splits: &Splits) -> Result<Model> {
    let (mean, std) = channel_stats(&splits.train);
    let model_cfg = ModelConfig {
        input_mean: mean,
        input_std: std,
        resolution: splits.train.resolution,
        vocab_size: splits.train.vocab.len(),
        ..cfg.model.clone()
    };
    Model::new(model_cfg, cfg.seed)
}

struct Group {
    opt: Optimizer,
    schedule: Option<OneCycle>,
    period: usize,
    updates: usize,
}

impl Group {
    fn new(opt: Optimizer, max_lr: f64, period: usize, total_steps: usize, cfg: &TrainConfig) -> Self {
        let updates_total = total_steps.div_ceil(period);
        let schedule = cfg.one_cycle.then(|| cfg.schedule.one_cycle(max_lr, updates_total));
        Self { opt, schedule, period, updates: 0 }
    }

    /// Applies an update when `step` closes an accumulation window.
    fn maybe_step(&mut self, step: usize) -> Result<()> {
        if !step.is_multiple_of(self.period) {
            return Ok(());
        }
        if self.period > 1 {
            self.opt.scale_grads(1.0 / self.period as f64);
        }
        let lr = self.schedule.map_or(self.opt.base_lr(), |s| s.lr(self.updates));
        self.opt.step(lr)?;
        self.opt.zero_grad();
        self.updates += 1;
        Ok(())
    }
}

/// Trains `cfg.model.kind` on `splits.train`, early-stopping on the
/// validation loss, and returns the model restored to its best epoch.
pub fn train(cfg: &TrainConfig, splits: &Splits) -> Result<TrainOutcome> {
    cfg.validate()?;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::contract("training needs non-empty train and validation splits"));
    }
    let model = build_model(cfg, splits)?;
    let kind = model.kind();
    let started = Instant::now();

    let batches_per_epoch = splits.train.len().div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let temperature = cfg.schedule.temperature(total_steps);
    // The staggered update periods are an XCB convergence aid; single-branch
    // models step every batch.
    let visual_period = if kind == ModelKind::Xcb { cfg.visual_period } else { 1 };
    let mut visual = Group::new(
        Optimizer::adadelta(cfg.adadelta, model.visual_params()),
        cfg.schedule.visual_max_lr,
        visual_period,
        total_steps,
        cfg,
    );
    let mut text = Group::new(
        Optimizer::adamw(cfg.adamw, model.text_params()),
        cfg.schedule.text_max_lr,
        cfg.text_period,
        total_steps,
        cfg,
    );
    let pretrain = if kind == ModelKind::Xcb { cfg.pretrain_epochs.min(cfg.epochs - 1) } else { 0 };

    let mut shuffle_rng = stream(cfg.seed, streams::SHUFFLE);
    let mut noise_rng = stream(cfg.seed, streams::NOISE);
    let mut sparsity_rng = stream(cfg.seed, streams::SPARSITY);
    let mut order: Vec<usize> = (0..splits.train.len()).collect();

    let mut log = Vec::new();
    let mut step_losses = Vec::with_capacity(total_steps);
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    let mut stale = 0usize;
    let mut step = 0usize;
    let mut epoch_seconds = Vec::new();

    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        let with_text = kind == ModelKind::Xcb && epoch >= pretrain;
        order.shuffle(&mut shuffle_rng);
        let mut acc = LossBreakdown::default();
        let mut preds = Vec::with_capacity(order.len());
        let mut labels = Vec::with_capacity(order.len());
        let mut tau = temperature.at(step);
        for chunk in order.chunks(cfg.batch_size) {
            tau = temperature.at(step);
            step += 1;
            let batch = Batch::from_indices(&splits.train, chunk)?;
            let mut sampling = Sampling::Stochastic { tau, rng: &mut noise_rng };
            let out = batch_loss(
                &model,
                &batch,
                &cfg.loss,
                &mut sampling,
                SparsitySample::Random(&mut sparsity_rng),
                with_text,
            )
            .map_err(|e| Error::Diverged { epoch, step, snapshot: e.to_string() })?;
            out.loss.backward()?;
            let diverged = |e: Error| Error::Diverged { epoch, step, snapshot: format!("{e}; last loss {:?}", out.breakdown) };
            if with_text && !cfg.freeze_text {
                text.maybe_step(step).map_err(diverged)?;
            } else {
                text.opt.zero_grad();
            }
            visual.maybe_step(step).map_err(diverged)?;
            accumulate(&mut acc, &out.breakdown, chunk.len() as f64);
            step_losses.push(out.breakdown);
            preds.extend(argmax_rows(&out.class_logits.to_vec(), model.config.num_classes));
            labels.extend(batch.labels.iter().copied());
        }
        scale(&mut acc, 1.0 / order.len() as f64);
        let train_f1 = macro_f1(&preds, &labels, model.config.num_classes)?;
        let (val, val_f1) = evaluate_loss(&model, &splits.val, cfg)?;
        if !val.total.is_finite() {
            return Err(Error::Diverged { epoch, step, snapshot: format!("validation loss {:?}", val) });
        }
        let secs = epoch_start.elapsed().as_secs_f64();
        epoch_seconds.push(secs);
        log.push(EpochRecord { epoch, split: Split::Train, loss: acc, f1: train_f1, tau, seconds: secs });
        log.push(EpochRecord { epoch, split: Split::Val, loss: val, f1: val_f1, tau, seconds: secs });

        if epoch < pretrain {
            continue;
        }
        match &best {
            Some((_, b, _)) if val.total >= *b => {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((epoch, val.total, snapshot(&model)));
                stale = 0;
            }
        }
    }

    let (best_epoch, best_val_loss, values) = best.ok_or_else(|| Error::contract("no epoch finished"))?;
    restore(&model, &values)?;
    let total_seconds = started.elapsed().as_secs_f64();
    let epochs_run = epoch_seconds.len();
    Ok(TrainOutcome {
        config: cfg.clone(),
        model,
        log,
        step_losses,
        best_epoch,
        best_val_loss,
        timings: Timings {
            total_seconds,
            mean_epoch_seconds: epoch_seconds.iter().sum::<f64>() / epochs_run.max(1) as f64,
            epochs_run,
            steps: step,
        },
    })
}
