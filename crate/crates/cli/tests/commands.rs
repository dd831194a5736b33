use std::fs;
use std::path::Path;
use std::process::Command;

use parabench_cli::{run_from, CliError};
use parabench_core::{save_embeddings, BenchmarkKind, BenchmarkManifest, EmbeddingMatrix};
use serde_json::Value;

fn cli(args: &[&str]) -> Result<String, CliError> {
    run_from(std::iter::once("parabench").chain(args.iter().copied()))
}

fn ok(args: &[&str]) -> String {
    cli(args).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

const SMALL_SYNTH: &str = r#"{"n_pretrain":400,"n_train":256,"n_gallery":100,"n_queries":50}"#;

const SMALL_EXPERIMENT: &str = r#"{
  "synth": {"n_pretrain": 400, "n_train": 256, "n_gallery": 60, "n_queries": 20},
  "train": {"epochs": 2, "warmup_steps": 4, "batch_size": 32},
  "pretrain": {"epochs": 2, "warmup_steps": 4},
  "alignment_layers": 2,
  "seeds": [0, 1, 2, 3, 4],
  "strategies": ["finetune", "frozen_alignment"]
}"#;

fn three_row_gallery(dir: &Path) {
    let gallery = EmbeddingMatrix::from_rows(2, &[[1.0f32, 0.0], [0.0, 1.0], [0.6, 0.8]]).unwrap();
    save_embeddings(&gallery, dir.join("g.pemb")).unwrap();
    let query = EmbeddingMatrix::from_rows(2, &[[1.0f32, 0.0]]).unwrap();
    save_embeddings(&query, dir.join("q.pemb")).unwrap();
}

#[test]
fn synth_output_validates_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    fs::write(&cfg, SMALL_SYNTH).unwrap();
    let out = dir.path().join("data");
    ok(&["synth", "--config", p(&cfg), "--out", p(&out)]);
    for manifest in ["paraphrase.json", "retrieval.json"] {
        let summary = json(&ok(&["validate", "--manifest", p(&out.join(manifest))]));
        assert_eq!(summary["violations"], Value::Array(vec![]));
        assert_eq!(summary["pairs"], 50);
        assert_eq!(summary["gallery"], 100);
    }
    let report = json(&ok(&["eval", "--manifest", p(&out.join("paraphrase.json")), "--kind", "paraphrase"]));
    let ao = report["metrics"][0]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ao));
    assert_eq!(report["metrics"][0]["label"], "AO@10");
}

#[test]
fn paraphrases_equal_to_queries_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f32>> = (0..30).map(|i| vec![(i as f32 * 0.7).sin(), (i as f32 * 1.3).cos(), 0.2]).collect();
    save_embeddings(&EmbeddingMatrix::from_rows(3, &rows).unwrap(), dir.path().join("gallery.pemb")).unwrap();
    save_embeddings(&EmbeddingMatrix::from_rows(3, &rows[..12]).unwrap(), dir.path().join("queries.pemb")).unwrap();
    let mut m = BenchmarkManifest::new(BenchmarkKind::Paraphrase, "queries.pemb");
    m.paraphrases = Some("queries.pemb".into());
    m.gallery = Some("gallery.pemb".into());
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let out = dir.path().join("report");
    let report = json(&ok(&["eval", "--manifest", p(&path), "--kind", "paraphrase", "--k", "10", "--out", p(&out)]));
    assert_eq!(report["metrics"][0]["label"], "AO@10");
    assert_eq!(report["metrics"][0]["value"], 1.0);
    assert_eq!(report["metrics"][1]["value"], 1.0);
    assert!(out.join("report.json").exists() && out.join("AO@10.csv").exists() && out.join("metrics.csv").exists());
    let table = ok(&["eval", "--manifest", p(&path), "--format", "table"]);
    assert!(table.contains("100.00"), "{table}");
}

#[test]
fn retrieve_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    three_row_gallery(dir.path());
    let text = ok(&["retrieve", "--queries", p(&dir.path().join("q.pemb")), "--gallery", p(&dir.path().join("g.pemb")), "--k", "3"]);
    // cosines with (1, 0) are 1, 0, 0.6
    let line = json(text.lines().next().unwrap());
    assert_eq!(line["query"], 0);
    assert_eq!(line["indices"], serde_json::json!([0, 2, 1]));
    let scores: Vec<f64> = line["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (s, e) in scores.iter().zip([1.0, 0.6, 0.0]) {
        assert!((s - e).abs() < 1e-7, "{scores:?}");
    }
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn golden_outputs() {
    let dir = tempfile::tempdir().unwrap();
    three_row_gallery(dir.path());
    let rankings = ok(&["retrieve", "--queries", p(&dir.path().join("q.pemb")), "--gallery", p(&dir.path().join("g.pemb")), "--k", "3"]);
    assert_eq!(rankings, include_str!("golden/retrieve_k3.jsonl"));

    let mut m = BenchmarkManifest::new(BenchmarkKind::Retrieval, "q.pemb");
    m.gallery = Some("g.pemb".into());
    m.relevance = Some(vec![vec![2]]);
    m.save(dir.path().join("m.json")).unwrap();
    let report = cli(&["eval", "--manifest", p(&dir.path().join("m.json")), "--k", "1,2"]).unwrap();
    let normalized = report.replace(p(&dir.path().join("m.json")), "<manifest>").replace(parabench_duotower::TOOL_VERSION, "<version>");
    assert_eq!(normalized, include_str!("golden/eval_retrieval.json"));
}

#[test]
fn experiment_table_has_runs_and_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("e.json");
    fs::write(&cfg, SMALL_EXPERIMENT).unwrap();
    let out = dir.path().join("exp");
    let table = ok(&["experiment", "--config", p(&cfg), "--out", p(&out)]);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("strategy") && lines[0].contains("AO@10") && lines[0].contains("R@5"));
    assert_eq!(lines.len(), 2 + 2 * 5 + 2);
    assert_eq!(lines.iter().filter(|l| l.contains(" mean ")).count(), 2);
    let report = json(&fs::read_to_string(out.join("experiment.json")).unwrap());
    assert_eq!(report["runs"].as_array().unwrap().len(), 10);
    assert_eq!(report["config"]["seeds"], serde_json::json!([0, 1, 2, 3, 4]));
    assert!(report["tool_version"].is_string());
    let csv = fs::read_to_string(out.join("experiment.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 + 2);
}

#[test]
fn every_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("s.json"), SMALL_SYNTH).unwrap();
    fs::write(root.join("e.json"), SMALL_EXPERIMENT.replace("[0, 1, 2, 3, 4]", "[7]")).unwrap();
    let read = |p: &Path| fs::read(p).unwrap();
    let mut outputs = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "3")] {
        let d = root.join(run);
        let mut files = Vec::new();
        ok(&["--threads", threads, "synth", "--config", p(&root.join("s.json")), "--out", p(&d.join("synth"))]);
        for f in ["synth.json", "gallery.pemb", "queries.pemb", "paraphrase.json", "features/pair_texts.pemb"] {
            files.push(read(&d.join("synth").join(f)));
        }
        ok(&["--threads", threads, "train", "--config", p(&root.join("e.json")), "--out", p(&d.join("train"))]);
        for f in ["train.json", "model.json", "loss.csv", "queries.pemb"] {
            files.push(read(&d.join("train").join(f)));
        }
        let q = d.join("train/queries.pemb");
        let g = d.join("train/gallery.pemb");
        ok(&["--threads", threads, "retrieve", "--queries", p(&q), "--gallery", p(&g), "--k", "5", "--out", p(&d.join("r.jsonl"))]);
        files.push(read(&d.join("r.jsonl")));
        ok(&["--threads", threads, "expand", "--queries", p(&q), "--expansions", p(&d.join("train/paraphrases.pemb")), "--k", "1", "--out", p(&d.join("x.pemb"))]);
        files.push(read(&d.join("x.pemb")));
        let report = ok(&["--threads", threads, "eval", "--manifest", p(&d.join("train/paraphrase.json")), "--out", p(&d.join("eval"))]);
        files.push(report.replace(p(&d), "<dir>").into_bytes());
        files.push(read(&d.join("eval/AO@10.csv")));
        ok(&["--threads", threads, "experiment", "--config", p(&root.join("e.json")), "--out", p(&d.join("exp"))]);
        files.push(read(&d.join("exp/experiment.json")));
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), outputs[1].len());
    for (i, (a, b)) in outputs[0].iter().zip(&outputs[1]).enumerate() {
        assert!(a == b, "output {i} differs between runs");
    }
}

fn binary() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_parabench"));
    c.env_remove("PARABENCH_THREADS");
    c
}

fn stderr_json(out: &std::process::Output) -> Value {
    json(String::from_utf8_lossy(&out.stderr).trim())
}

#[test]
fn exit_codes_and_machine_readable_errors() {
    let dir = tempfile::tempdir().unwrap();

    let out = binary().args(["retrieve", "--k", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let out = binary().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let mut m = BenchmarkManifest::new(BenchmarkKind::Paraphrase, "missing.pemb");
    m.gallery = Some("also_missing.pemb".into());
    let path = dir.path().join("bad.json");
    m.save(&path).unwrap();
    let out = binary().args(["eval", "--manifest", p(&path)]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["details"].as_array().unwrap().iter().any(|v| v["code"] == "missing file"));
    let out = binary().args(["validate", "--manifest", p(&path)]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let junk = dir.path().join("junk.pemb");
    fs::write(&junk, b"NOTPEMB\n0000000000000000").unwrap();
    let out = binary().args(["retrieve", "--queries", p(&junk), "--gallery", p(&junk), "--k", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = binary().args(["eval", "--manifest", p(&dir.path().join("nowhere.json"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "runtime");

    let cfg = dir.path().join("neg.json");
    fs::write(&cfg, r#"{"sigma_text": -1.0}"#).unwrap();
    let out = binary().args(["synth", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn thread_count_comes_from_flag_or_environment() {
    let dir = tempfile::tempdir().unwrap();
    three_row_gallery(dir.path());
    let (q, g) = (dir.path().join("q.pemb"), dir.path().join("g.pemb"));
    let args = ["retrieve", "--queries", p(&q), "--gallery", p(&g), "--k", "2"];
    let base = binary().args(args).output().unwrap();
    assert!(base.status.success());
    let env = binary().env("PARABENCH_THREADS", "2").args(args).output().unwrap();
    assert_eq!(env.stdout, base.stdout);
    let zero = binary().env("PARABENCH_THREADS", "0").args(args).output().unwrap();
    assert_eq!(zero.status.code(), Some(2));
    let bad = binary().args(["--threads", "x"]).args(args).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
