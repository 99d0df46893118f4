use std::path::Path;
use std::process::{Command, Output};

fn xcb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xcb")).args(args).env("XCB_THREADS", "1").output().expect("spawn xcb")
}

fn ok(args: &[&str]) -> String {
    let out = xcb(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: [&str; 8] =
    ["--set", "epochs=2", "--set", "batch_size=16", "--set", "model.conv_channels=[4,4]", "--set", "model.embed_dim=8"];

fn tiny_data(dir: &Path) {
    ok(&["gen-data", "--n", "90", "--seed", "3", "--resolution", "32", "--out", p(dir)]);
}

fn train_run(data: &Path, out: &Path, model: &str) {
    let mut args = vec!["train", "--model", model, "--data", p(data), "--out", p(out)];
    args.extend(TINY);
    ok(&args);
}

#[test]
fn gen_train_eval_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    tiny_data(&data);
    for f in ["manifest.jsonl", "images.bin", "vocab.txt"] {
        assert!(data.join(f).exists(), "{f}");
    }
    train_run(&data, &run, "xcb");
    for f in ["config.json", "log.csv", "best.ckpt", "repr_test.csv", "timings.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["epochs"], 2);
    assert_eq!(cfg["model"]["conv_channels"], serde_json::json!([4, 4]));
    let report = ok(&["eval", "--run", p(&run), "--data", p(&data), "--metrics", "f1"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    let f1 = v["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    assert!(v.get("dci").is_none());
}

#[test]
fn concepts_attribution_and_survey() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    tiny_data(&data);
    train_run(&data, &run, "xcb");
    let concepts = ok(&["concepts", "--run", p(&run), "--data", p(&data), "--top-k", "3"]);
    assert_eq!(concepts.lines().filter(|l| l.starts_with("factor")).count(), 10);

    let maps = tmp.path().join("maps");
    ok(&["attribute", "--run", p(&run), "--data", p(&data), "--steps", "8", "--count", "2", "--out", p(&maps)]);
    let records: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(maps.join("attribution.json")).unwrap()).unwrap();
    assert_eq!(records.len(), 2);
    assert!(std::fs::read_dir(&maps).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "pgm")));

    let questions = tmp.path().join("q.json");
    ok(&["survey", "gen", "--run", p(&run), "--data", p(&data), "--questions", "3", "--out", p(&questions)]);
    let qs: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&questions).unwrap()).unwrap();
    let picks: Vec<String> = qs.iter().map(|q| q["distractor"].to_string()).collect();
    let scored = ok(&["survey", "score", "--questions", p(&questions), "--answers", &picks.join(",")]);
    assert_eq!(scored.trim(), "XScore 1.0000");
    let bad = xcb(&["survey", "score", "--questions", p(&questions), "--answers", "0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn ablate_and_robustness_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_data(&data);
    let abl = tmp.path().join("abl");
    let mut args = vec!["ablate", "--data", p(&data), "--out", p(&abl), "--seeds", "1"];
    args.extend(TINY);
    let csv = ok(&args);
    assert!(csv.starts_with("modification,ΔF1,ΔDisent,ΔCompl,ΔInform"));
    assert_eq!(csv.lines().count(), 8);

    let rob = tmp.path().join("rob");
    let mut args = vec!["robustness", "--data", p(&data), "--out", p(&rob), "--seeds", "1", "--attribute", "2", "--steps", "4"];
    args.extend(TINY);
    let csv = ok(&args);
    assert!(csv.contains("ΔF1") && csv.contains("ΔD") && csv.contains("ΔC") && csv.contains("ΔI"));
    assert!(rob.join("robustness.csv").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(xcb(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(xcb(&["gen-data"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = tmp.path().join("out");
    let r = xcb(&["train", "--data", p(&missing), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));
    let r = xcb(&["train", "--data", p(&missing), "--out", p(&out), "--set", "nope=1"]);
    assert_eq!(r.status.code(), Some(2));
    let r = xcb(&["gen-data", "--n", "3", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1));
}
