use std::path::Path;

use xcb_core::data::{generate_dataset, load_dataset, save_dataset, split, with_shortcut, Dataset, GenOptions, SplitRatios, Splits};
use xcb_core::io::{read_to_string, write_atomic, write_json};
use xcb_core::metrics::{integrated_gradients, shortcut_attribution_share, survey_generate, survey_score, white_baseline, SurveyQuestion};
use xcb_core::models::{concept_candidates, load_checkpoint, ConceptReport, Model, ModelConfig, ModelKind};
use xcb_core::rng::{stream, streams};
use xcb_core::training::{ablate, default_ablation_grid, evaluate, robustness, train, write_run_dir, RobustnessOptions, TrainConfig};
use xcb_core::data::SHORTCUT_BOX;

use crate::args::*;
use crate::config::resolve;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Robustness(a) => robustness_cmd(a),
        Command::Concepts(a) => concepts_cmd(a),
        Command::Attribute(a) => attribute_cmd(a),
        Command::Survey(SurveyCommand::Gen(a)) => survey_gen(a),
        Command::Survey(SurveyCommand::Score(a)) => survey_score_cmd(a),
    }
}

/// Worker threads for multi-run commands, bounded by `XCB_THREADS`.
fn threads() -> Result<usize> {
    match std::env::var("XCB_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("XCB_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn load_splits(data: &Path, split_seed: u64) -> Result<Splits> {
    let ds = load_dataset(data)?;
    Ok(split(&ds, SplitRatios::default(), split_seed)?)
}

fn load_run(run: &Path) -> Result<(TrainConfig, Model)> {
    let cfg: TrainConfig = serde_json::from_str(&read_to_string(&run.join("config.json"))?)
        .map_err(xcb_core::Error::from)?;
    let model = load_checkpoint(&run.join("best.ckpt"), Some(&cfg.model))?;
    Ok((cfg, model))
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let opts = GenOptions { shortcut: a.shortcut, noisy_frac: a.noisy_frac, redundant: a.redundant };
    let ds = generate_dataset(a.n, a.seed, a.resolution, &opts)?;
    save_dataset(&ds, &a.out)?;
    println!(
        "wrote {} examples to {} (vocabulary {}, mean caption {:.2} tokens, max {})",
        ds.len(),
        a.out.display(),
        ds.used_vocabulary(),
        ds.mean_caption_len(),
        ds.max_caption_len()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = resolve(&a.config, ModelKind::Xcb)?;
    let splits = load_splits(&a.data, cfg.split_seed)?;
    let outcome = train(&cfg, &splits)?;
    let eval = evaluate(&outcome.model, &splits.train, &splits.test, cfg.dci_lambda)?;
    write_run_dir(&a.out, &outcome, Some(&eval))?;
    println!(
        "{} seed {}: best epoch {} (val loss {:.4}), test F1 {:.4}, D {:.4}, C {:.4}, I {:.4}; run in {}",
        outcome.model.kind().name(),
        cfg.seed,
        outcome.best_epoch,
        outcome.best_val_loss,
        eval.f1,
        eval.dci.disentanglement,
        eval.dci.completeness,
        eval.dci.informativeness,
        a.out.display()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let wanted: Vec<&str> = a.metrics.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if let Some(bad) = wanted.iter().find(|m| !["f1", "per_class", "dci"].contains(m)) {
        return Err(CliError::Usage(format!("unknown metric `{bad}` (expected f1, per_class, dci)")));
    }
    let (cfg, model) = load_run(&a.run)?;
    let splits = load_splits(&a.data, cfg.split_seed)?;
    let rec = evaluate(&model, &splits.train, &splits.test, cfg.dci_lambda)?;
    let mut report = serde_json::Map::new();
    if wanted.contains(&"f1") {
        report.insert("f1".into(), rec.f1.into());
    }
    if wanted.contains(&"per_class") {
        report.insert("per_class_f1".into(), rec.per_class_f1.clone().into());
    }
    if wanted.contains(&"dci") {
        report.insert("dci".into(), serde_json::to_value(&rec.dci).map_err(xcb_core::Error::from)?);
    }
    let text = serde_json::to_string_pretty(&report).map_err(xcb_core::Error::from)?;
    if let Some(out) = &a.out {
        write_atomic(out, text.as_bytes())?;
    }
    println!("{text}");
    Ok(())
}

fn experiment_config(a: &ExperimentArgs) -> Result<TrainConfig> {
    let mut cfg = resolve(&a.config, ModelKind::Xcb)?;
    if let Some(seeds) = &a.seeds {
        if seeds.is_empty() {
            return Err(CliError::Usage("--seeds needs at least one seed".into()));
        }
        cfg.seeds = seeds.clone();
    }
    Ok(cfg)
}

fn ablate_cmd(a: ExperimentArgs) -> Result<()> {
    let mut cfg = experiment_config(&a)?;
    if cfg.model.kind != ModelKind::Xcb {
        return Err(CliError::Usage("ablate runs on --model xcb".into()));
    }
    // Visual pretraining stays off so every variant trains identically.
    if a.config.config.is_none() && !a.config.overrides.iter().any(|o| o.starts_with("pretrain_epochs=")) {
        cfg.pretrain_epochs = 0;
    }
    let splits = load_splits(&a.data, cfg.split_seed)?;
    let grid = default_ablation_grid(&cfg.model);
    let table = ablate(&splits, &cfg, &grid, threads()?)?;
    std::fs::create_dir_all(&a.out).map_err(|e| xcb_core::Error::Io { path: a.out.clone(), source: e })?;
    write_json(&a.out.join("config.json"), &cfg)?;
    write_json(&a.out.join("ablation.json"), &table)?;
    let csv = table.to_csv();
    write_atomic(&a.out.join("ablation.csv"), csv.as_bytes())?;
    print!("{csv}");
    for row in table.rows.iter().filter(|r| !r.failures.is_empty()) {
        eprintln!("{}: {}", row.label, row.failures.join("; "));
    }
    Ok(())
}

fn robustness_cmd(a: RobustnessArgs) -> Result<()> {
    let xcb = experiment_config(&a.experiment)?;
    if xcb.model.kind != ModelKind::Xcb {
        return Err(CliError::Usage("robustness compares against --model xcb".into()));
    }
    let standard = TrainConfig {
        model: ModelConfig { kind: ModelKind::Standard, ..xcb.model.clone() },
        ..xcb.clone()
    };
    let clean = load_dataset(&a.experiment.data)?;
    let marked = with_shortcut(&clean)?;
    let ratios = SplitRatios::default();
    let marked_splits = split(&marked, ratios, xcb.split_seed)?;
    let clean_test = split(&clean, ratios, xcb.split_seed)?.test;
    let opts = RobustnessOptions { threads: threads()?, attribution_examples: a.attribute, ig_steps: a.steps };
    let report = robustness(&marked_splits, &clean_test, &standard, &xcb, opts)?;
    let out = &a.experiment.out;
    std::fs::create_dir_all(out).map_err(|e| xcb_core::Error::Io { path: out.clone(), source: e })?;
    write_json(&out.join("config.json"), &xcb)?;
    write_json(&out.join("robustness.json"), &report)?;
    let csv = report.to_csv();
    write_atomic(&out.join("robustness.csv"), csv.as_bytes())?;
    print!("{csv}");
    for s in &report.seeds {
        if let (Some(a), Some(b)) = (s.standard_shortcut_share, s.xcb_shortcut_share) {
            println!("seed {}: shortcut share standard {a:.4}, xcb {b:.4}", s.seed);
        }
    }
    for f in &report.failures {
        eprintln!("{f}");
    }
    Ok(())
}

fn concept_report(run: &Path, data: &Path, top_k: usize) -> Result<(Dataset, ConceptReport)> {
    let (cfg, model) = load_run(run)?;
    if model.kind() != ModelKind::Xcb {
        return Err(CliError::Usage("concepts need an XCB run".into()));
    }
    let test = load_splits(data, cfg.split_seed)?.test;
    let report = concept_candidates(&model, &test, top_k)?;
    Ok((test, report))
}

fn concepts_cmd(a: ConceptsArgs) -> Result<()> {
    let (_, report) = concept_report(&a.run, &a.data, a.top_k)?;
    for f in &report.factors {
        let tokens: Vec<String> = f.tokens.iter().map(|t| format!("{} ({:.3})", t.token, t.psi)).collect();
        println!("factor {:>2}: {}", f.factor, tokens.join(", "));
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn attribute_cmd(a: AttributeArgs) -> Result<()> {
    let (cfg, model) = load_run(&a.run)?;
    let test = load_splits(&a.data, cfg.split_seed)?.test;
    let res = model.config.resolution;
    let baseline = white_baseline(res);
    std::fs::create_dir_all(&a.out).map_err(|e| xcb_core::Error::Io { path: a.out.clone(), source: e })?;
    let mut records = Vec::new();
    for e in test.examples.iter().take(a.count) {
        let map = integrated_gradients(|x| model.class_scores(x), &e.image, &baseline, res, a.steps, e.label)?;
        let share = shortcut_attribution_share(&map.values, res, SHORTCUT_BOX)?;
        write_atomic(&a.out.join(format!("ig_{}.pgm", e.id)), map.to_pgm().as_bytes())?;
        println!(
            "example {}: label {}, corner share {:.4}, completeness error {:.2e}",
            e.id, e.label, share.share, map.completeness_error
        );
        records.push(serde_json::json!({
            "id": e.id,
            "label": e.label,
            "shortcut_share": share.share,
            "score_delta": map.score_delta,
            "completeness_error": map.completeness_error,
        }));
    }
    write_json(&a.out.join("attribution.json"), &records)?;
    Ok(())
}

fn survey_gen(a: SurveyGenArgs) -> Result<()> {
    let (_, report) = concept_report(&a.run, &a.data, a.top_k)?;
    let questions = survey_generate(&report, a.questions, a.top_k, a.images, &mut stream(a.seed, streams::SURVEY))?;
    write_json(&a.out, &questions)?;
    for (i, q) in questions.iter().enumerate() {
        let opts: Vec<&str> = q.options.iter().map(|o| o.token.as_str()).collect();
        println!("q{i}: images {:?} options [{}]", q.image_ids, opts.join(", "));
    }
    Ok(())
}

fn survey_score_cmd(a: SurveyScoreArgs) -> Result<()> {
    let questions: Vec<SurveyQuestion> =
        serde_json::from_str(&read_to_string(&a.questions)?).map_err(xcb_core::Error::from)?;
    let score = survey_score(&a.answers, &questions)?;
    println!("XScore {score:.4}");
    Ok(())
}
