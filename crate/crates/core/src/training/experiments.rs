use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::{evaluate, EvalRecord};
use super::train::{train, TrainOutcome};
use crate::data::{Dataset, ShapesExample, Splits, SHORTCUT_BOX};
use crate::error::{Error, Result};
use crate::losses::TieKind;
use crate::metrics::{integrated_gradients, shortcut_attribution_share, white_baseline};
use crate::models::{AttentionActivation, AttentionNorm, BottleneckActivation, Model, ModelConfig, ModelKind};

/// Runs `jobs` on at most `threads` worker threads, returning results in
/// job order.
pub fn run_parallel<T, R, F>(jobs: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let n = jobs.len();
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(&jobs[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("result slot poisoned").expect("job did not run")).collect()
}

/// Headline metrics of one trained-and-evaluated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub f1: f64,
    pub disentanglement: f64,
    pub completeness: f64,
    pub informativeness: f64,
}

impl RunSummary {
    pub fn new(seed: u64, eval: &EvalRecord) -> Self {
        Self {
            seed,
            f1: eval.f1,
            disentanglement: eval.dci.disentanglement,
            completeness: eval.dci.completeness,
            informativeness: eval.dci.informativeness,
        }
    }

    fn delta(&self, base: &RunSummary) -> [f64; 4] {
        [
            self.f1 - base.f1,
            self.disentanglement - base.disentanglement,
            self.completeness - base.completeness,
            self.informativeness - base.informativeness,
        ]
    }
}

/// Trains with `cfg` under `seed` and evaluates on `test`.
pub fn train_and_evaluate(
    cfg: &TrainConfig,
    seed: u64,
    splits: &Splits,
    test: &Dataset,
) -> Result<(TrainOutcome, EvalRecord)> {
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let outcome = train(&cfg, splits)?;
    let eval = evaluate(&outcome.model, &splits.train, test, cfg.dci_lambda)?;
    Ok((outcome, eval))
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for n < 2).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.sd)
    }
}

/// How a grid row relates to the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationEffect {
    /// The variant lacks a component the full model has; Δ = full − variant,
    /// i.e. the effect of adding the component.
    Adds,
    /// The variant swaps a component for an alternative; Δ = variant − full.
    Replaces,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub label: String,
    pub model: ModelConfig,
    pub effect: AblationEffect,
}

/// The seven toggles of the XCB ablation, relative to `full`.
pub fn default_ablation_grid(full: &ModelConfig) -> Vec<AblationVariant> {
    let v = |label: &str, effect, f: &dyn Fn(&mut ModelConfig)| {
        let mut model = full.clone();
        f(&mut model);
        AblationVariant { label: label.into(), model, effect }
    };
    use AblationEffect::*;
    vec![
        v("Sigmoid -> Gumbel Sigmoid", Adds, &|m| m.bottleneck = BottleneckActivation::Sigmoid),
        v("Softmax -> Entmax", Adds, &|m| m.attention = AttentionActivation::Softmax),
        v("Regular norm. -> Slot attention norm.", Adds, &|m| m.normalization = AttentionNorm::Regular),
        v("w/o dummy query & tokens -> w/", Adds, &|m| m.dummies = false),
        v("Reg. via pairwise similarities of r_i", Adds, &|m| m.sparsity_reg = false),
        v("D_JS(f'||c') -> D_KL(f'||c')", Replaces, &|m| m.tie = TieKind::KlFc),
        v("D_JS(f'||c') -> D_KL(c'||f')", Replaces, &|m| m.tie = TieKind::KlCf),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub delta_f1: MeanSd,
    pub delta_disentanglement: MeanSd,
    pub delta_completeness: MeanSd,
    pub delta_informativeness: MeanSd,
    /// `seed: error` for cells whose training or evaluation failed.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub full: Vec<RunSummary>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("modification,ΔF1,ΔDisent,ΔCompl,ΔInform,runs,failures\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "\"{}\",{},{},{},{},{},{}",
                r.label.replace('"', "'"),
                r.delta_f1,
                r.delta_disentanglement,
                r.delta_completeness,
                r.delta_informativeness,
                r.delta_f1.n,
                r.failures.len()
            );
        }
        s
    }
}

/// Trains the full configuration and each grid variant over `cfg.seeds`
/// and reports paired per-seed deltas as mean ± sd. Failed cells are
/// recorded on their row; only a grid without the full model fails.
pub fn ablate(splits: &Splits, cfg: &TrainConfig, grid: &[AblationVariant], threads: usize) -> Result<AblationTable> {
    if cfg.model.kind != ModelKind::Xcb {
        return Err(Error::contract("ablation runs on the XCB model"));
    }
    cfg.validate()?;
    for v in grid {
        TrainConfig { model: v.model.clone(), ..cfg.clone() }.validate()?;
    }
    // One job per (config, seed); index 0 is the full model.
    let configs: Vec<&ModelConfig> = std::iter::once(&cfg.model)
        .chain(grid.iter().filter(|v| v.model != cfg.model).map(|v| &v.model))
        .collect();
    let jobs: Vec<(usize, u64)> =
        (0..configs.len()).flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let results = run_parallel(jobs.clone(), threads, |&(c, seed)| {
        let run_cfg = TrainConfig { model: configs[c].clone(), ..cfg.clone() };
        train_and_evaluate(&run_cfg, seed, splits, &splits.test).map(|(_, e)| RunSummary::new(seed, &e))
    });
    let lookup = |model: &ModelConfig, seed: u64| -> &Result<RunSummary> {
        let c = configs.iter().position(|m| *m == model).expect("config scheduled");
        let j = jobs.iter().position(|&(jc, js)| jc == c && js == seed).expect("job scheduled");
        &results[j]
    };

    let mut full = Vec::new();
    let mut rows = Vec::with_capacity(grid.len());
    for &seed in &cfg.seeds {
        if let Ok(r) = lookup(&cfg.model, seed) {
            full.push(*r);
        }
    }
    for v in grid {
        let mut deltas: [Vec<f64>; 4] = Default::default();
        let mut failures = Vec::new();
        for &seed in &cfg.seeds {
            match (lookup(&cfg.model, seed), lookup(&v.model, seed)) {
                (Ok(base), Ok(var)) => {
                    let d = match v.effect {
                        AblationEffect::Adds => base.delta(var),
                        AblationEffect::Replaces => var.delta(base),
                    };
                    (0..4).for_each(|i| deltas[i].push(d[i]));
                }
                (Err(e), _) => failures.push(format!("{seed}: full model: {e}")),
                (_, Err(e)) => failures.push(format!("{seed}: {e}")),
            }
        }
        rows.push(AblationRow {
            label: v.label.clone(),
            delta_f1: MeanSd::of(&deltas[0]),
            delta_disentanglement: MeanSd::of(&deltas[1]),
            delta_completeness: MeanSd::of(&deltas[2]),
            delta_informativeness: MeanSd::of(&deltas[3]),
            failures,
        });
    }
    Ok(AblationTable { full, rows })
}

/// Mean share of absolute integrated-gradients attribution that falls in
/// the shortcut corner, over `examples`, attributing each to its label.
pub fn mean_shortcut_share(model: &Model, examples: &[&ShapesExample], steps: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::contract("no examples to attribute"));
    }
    let res = model.config.resolution;
    let baseline = white_baseline(res);
    let mut total = 0.0;
    for e in examples {
        let map = integrated_gradients(|x| model.class_scores(x), &e.image, &baseline, res, steps, e.label)?;
        total += shortcut_attribution_share(&map.values, res, SHORTCUT_BOX)?.share;
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSeed {
    pub seed: u64,
    pub standard: RunSummary,
    pub xcb: RunSummary,
    pub standard_shortcut_share: Option<f64>,
    pub xcb_shortcut_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub seeds: Vec<RobustnessSeed>,
    pub delta_f1: MeanSd,
    pub delta_disentanglement: MeanSd,
    pub delta_completeness: MeanSd,
    pub delta_informativeness: MeanSd,
    pub failures: Vec<String>,
}

impl RobustnessReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,XCB - standard\n");
        for (name, m) in [
            ("ΔF1", self.delta_f1),
            ("ΔD", self.delta_disentanglement),
            ("ΔC", self.delta_completeness),
            ("ΔI", self.delta_informativeness),
        ] {
            let _ = writeln!(s, "{name},{m}");
        }
        s
    }
}

/// Options of [`robustness`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessOptions {
    pub threads: usize,
    /// Test examples attributed per model; 0 skips attribution.
    pub attribution_examples: usize,
    pub ig_steps: usize,
}

impl Default for RobustnessOptions {
    fn default() -> Self {
        Self { threads: 1, attribution_examples: 0, ig_steps: 64 }
    }
}

/// Trains the standard model and XCB on shortcut-bearing `splits` over
/// `cfg.seeds` and evaluates both on `clean_test`; deltas are XCB −
/// standard. Attribution is measured on the shortcut-bearing test split.
pub fn robustness(
    splits: &Splits,
    clean_test: &Dataset,
    standard_cfg: &TrainConfig,
    xcb_cfg: &TrainConfig,
    opts: RobustnessOptions,
) -> Result<RobustnessReport> {
    if standard_cfg.model.kind != ModelKind::Standard || xcb_cfg.model.kind != ModelKind::Xcb {
        return Err(Error::contract("robustness compares a standard model against XCB"));
    }
    let jobs: Vec<(bool, u64)> = xcb_cfg.seeds.iter().flat_map(|&s| [(false, s), (true, s)]).collect();
    let attributed: Vec<&ShapesExample> = splits.test.examples.iter().take(opts.attribution_examples).collect();
    let results = run_parallel(jobs, opts.threads, |&(is_xcb, seed)| -> Result<(RunSummary, Option<f64>)> {
        let cfg = if is_xcb { xcb_cfg } else { standard_cfg };
        let (outcome, eval) = train_and_evaluate(cfg, seed, splits, clean_test)?;
        let share = if attributed.is_empty() {
            None
        } else {
            Some(mean_shortcut_share(&outcome.model, &attributed, opts.ig_steps)?)
        };
        Ok((RunSummary::new(seed, &eval), share))
    });
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    let mut deltas: [Vec<f64>; 4] = Default::default();
    for (pair, &seed) in results.chunks(2).zip(&xcb_cfg.seeds) {
        match (&pair[0], &pair[1]) {
            (Ok((std_run, std_share)), Ok((xcb_run, xcb_share))) => {
                let d = xcb_run.delta(std_run);
                (0..4).for_each(|i| deltas[i].push(d[i]));
                seeds.push(RobustnessSeed {
                    seed,
                    standard: *std_run,
                    xcb: *xcb_run,
                    standard_shortcut_share: *std_share,
                    xcb_shortcut_share: *xcb_share,
                });
            }
            (Err(e), _) => failures.push(format!("{seed}: standard: {e}")),
            (_, Err(e)) => failures.push(format!("{seed}: xcb: {e}")),
        }
    }
    Ok(RobustnessReport {
        seeds,
        delta_f1: MeanSd::of(&deltas[0]),
        delta_disentanglement: MeanSd::of(&deltas[1]),
        delta_completeness: MeanSd::of(&deltas[2]),
        delta_informativeness: MeanSd::of(&deltas[3]),
        failures,
    })
}
