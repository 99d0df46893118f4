use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::eval::EvalRecord;
use super::train::{Timings, TrainOutcome};
use crate::error::Result;
use crate::io::{write_atomic, write_json};
use crate::models::save_checkpoint;

pub const LOG_HEADER: &str = "epoch,split,total,ce_visual,ce_text,tie,sparsity,concept,f1,tau,seconds";

/// Epoch log as CSV.
pub fn log_csv(outcome: &TrainOutcome) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in &outcome.log {
        let l = &r.loss;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.split.name(),
            l.total,
            l.ce_visual,
            l.ce_text,
            l.tie,
            l.sparsity,
            l.concept,
            r.f1,
            r.tau,
            r.seconds
        );
    }
    s
}

/// Representation rows as CSV with a `f0..f{L-1}` header.
pub fn representation_csv(rows: &[Vec<f64>]) -> String {
    let width = rows.first().map_or(0, Vec::len);
    let mut s = String::from("example");
    (0..width).for_each(|j| {
        let _ = write!(s, ",f{j}");
    });
    s.push('\n');
    for (i, row) in rows.iter().enumerate() {
        let _ = write!(s, "{i}");
        row.iter().for_each(|v| {
            let _ = write!(s, ",{v}");
        });
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct TimingsFile<'a> {
    #[serde(flatten)]
    timings: &'a Timings,
    best_epoch: usize,
    best_val_loss: f64,
}

/// Writes `config.json`, `log.csv`, `best.ckpt`, `timings.json` and, when
/// an evaluation is given, `metrics.json` and `repr_test.csv` into `dir`.
pub fn write_run_dir(dir: &Path, outcome: &TrainOutcome, eval: Option<&EvalRecord>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let mut config = outcome.config.clone();
    config.model = outcome.model.config.clone();
    write_json(&dir.join("config.json"), &config)?;
    write_atomic(&dir.join("log.csv"), log_csv(outcome).as_bytes())?;
    save_checkpoint(&outcome.model, &dir.join("best.ckpt"))?;
    write_json(
        &dir.join("timings.json"),
        &TimingsFile { timings: &outcome.timings, best_epoch: outcome.best_epoch, best_val_loss: outcome.best_val_loss },
    )?;
    if let Some(eval) = eval {
        write_json(&dir.join("metrics.json"), eval)?;
        write_atomic(&dir.join("repr_test.csv"), representation_csv(&eval.representation).as_bytes())?;
    }
    Ok(())
}
