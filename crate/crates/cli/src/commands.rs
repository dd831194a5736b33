use std::fs;
use std::io::BufWriter;
use std::path::Path;

use parabench_core::metrics::evaluate_manifest;
use parabench_core::retrieval::{expand_matrix, write_rankings_jsonl};
use parabench_core::{
    cosine_topk, l2_normalize, load_embeddings, save_embeddings, validate_manifest, BenchmarkManifest, EmbeddingMatrix,
    MetricReport,
};
use parabench_duotower::experiment::{embed_benchmark, export_benchmark, score_benchmark, BenchEmbeddings, SeedContext};
use parabench_duotower::train::write_loss_csv;
use parabench_duotower::{decode_latents, run_experiment, synth_generate, ExperimentConfig, Matrix, SynthConfig, TOOL_VERSION};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::format::{experiment_csv, experiment_table, metrics_csv, metrics_table, Format};
use crate::{EvalArgs, ExpandArgs, ExperimentArgs, RetrieveArgs, SynthArgs, TrainArgs, ValidateArgs};

fn runtime(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn make_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| runtime(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| runtime(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value))
}

/// Reads a JSON config; `None` gives the defaults.
fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| runtime(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
        }
    }
}

fn to_embedding(m: &Matrix<f64>) -> CliResult<EmbeddingMatrix> {
    Ok(EmbeddingMatrix::from_f64(m.rows, m.cols, &m.data)?)
}

/// Raw features under `features/` and reference embeddings at the top level:
/// the gallery holds the true concept latents, queries and paraphrases the
/// least-squares latent decodings of their captions.
pub fn synth(args: &SynthArgs) -> CliResult<String> {
    let mut cfg: SynthConfig = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let data = synth_generate(&cfg)?;
    let features = args.out.join("features");
    make_dir(&features)?;
    let raw = [
        ("gallery", &data.bench.gallery),
        ("queries", &data.bench.queries),
        ("paraphrases", &data.bench.paraphrases),
        ("pair_images", &data.pairs.images),
        ("pair_texts", &data.pairs.texts),
        ("pair_latents", &data.pairs.latents),
        ("pretrain_inputs", &data.pretrain.inputs),
        ("pretrain_targets", &data.pretrain.targets),
    ];
    let mut files = serde_json::Map::new();
    for (name, m) in raw {
        let rel = format!("features/{name}.pemb");
        save_embeddings(&to_embedding(m)?, args.out.join(&rel))?;
        files.insert(name.into(), json!({ "path": rel, "rows": m.rows, "dim": m.cols }));
    }
    write_json(&features.join("relevance.json"), &data.bench.relevance)?;

    let reference = BenchEmbeddings {
        gallery: l2_normalize(&to_embedding(&data.bench.latents)?)?,
        queries: l2_normalize(&to_embedding(&decode_latents(&data.text_maps[0], &data.bench.queries)?)?)?,
        paraphrases: l2_normalize(&to_embedding(&decode_latents(&data.text_maps[1], &data.bench.paraphrases)?)?)?,
    };
    export_benchmark(&args.out, &reference, &data.bench.relevance)?;
    write_json(&args.out.join("config.json"), &cfg)?;
    let report = json!({
        "tool_version": TOOL_VERSION,
        "command": "synth",
        "config": cfg,
        "features": files,
        "manifests": ["paraphrase.json", "retrieval.json"],
    });
    write_json(&args.out.join("synth.json"), &report)?;
    Ok(to_json(&report))
}

pub fn train(args: &TrainArgs) -> CliResult<String> {
    let base_cfg: ExperimentConfig = read_config(args.config.as_deref())?;
    let strategy = args.strategy.or_else(|| base_cfg.strategies.first().copied()).ok_or_else(|| CliError::validation("no strategy given"))?;
    let seed = args.seed.or_else(|| base_cfg.seeds.first().copied()).ok_or_else(|| CliError::validation("no seed given"))?;
    let cfg = ExperimentConfig { strategies: vec![strategy], seeds: vec![seed], ..base_cfg }.seeded(seed);
    cfg.validate()?;

    let ctx = SeedContext::prepare(&cfg)?;
    let out = ctx.train(strategy)?;
    make_dir(&args.out)?;
    let loss_path = args.out.join("loss.csv");
    let file = fs::File::create(&loss_path).map_err(|e| runtime(&loss_path, e))?;
    write_loss_csv(BufWriter::new(file), &out.log).map_err(|e| runtime(&loss_path, e))?;
    write_json(&args.out.join("model.json"), &out.model)?;
    let emb = embed_benchmark(&out.model, &ctx.data.bench)?;
    export_benchmark(&args.out, &emb, &ctx.data.bench.relevance)?;
    let scores = score_benchmark(&emb, &ctx.data.bench.relevance, cfg.k, cfg.recall_k)?;

    let report = json!({
        "tool_version": TOOL_VERSION,
        "command": "train",
        "strategy": strategy,
        "seed": seed,
        "config": cfg,
        "pretrain": ctx.text_report,
        "steps": out.log.len(),
        "final_loss": out.final_loss(),
        "trainable_params": out.model.text.trainable_count(&out.model.store),
        "scores": {
            format!("AO@{}", cfg.k): scores.ao,
            format!("JS@{}", cfg.k): scores.js,
            format!("R@{}", cfg.recall_k): scores.recall,
        },
    });
    write_json(&args.out.join("train.json"), &report)?;
    Ok(to_json(&report))
}

pub fn retrieve(args: &RetrieveArgs) -> CliResult<String> {
    let queries = load_embeddings(&args.queries)?;
    let gallery = load_embeddings(&args.gallery)?;
    let lists = cosine_topk(&queries, &gallery, args.k as usize)?;
    let mut buf = Vec::new();
    write_rankings_jsonl(&mut buf, &lists).expect("in-memory write");
    let text = String::from_utf8(buf).expect("JSON is UTF-8");
    match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            Ok(to_json(&json!({ "queries": lists.len(), "k": args.k, "out": path })))
        }
        None => Ok(text),
    }
}

fn load_valid(path: &Path) -> CliResult<BenchmarkManifest> {
    let manifest = BenchmarkManifest::from_path(path)?;
    let summary = validate_manifest(&manifest);
    if !summary.is_valid() {
        return Err(CliError::Validation {
            message: format!("{}: {} manifest violation(s)", path.display(), summary.violations.len()),
            details: serde_json::to_value(&summary.violations)?,
        });
    }
    Ok(manifest)
}

fn summary_json(r: &MetricReport) -> Value {
    json!({ "metric": r.metric, "k": r.k, "label": r.label(), "value": r.aggregate, "count": r.count })
}

fn kind_name(kind: parabench_core::BenchmarkKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn eval(args: &EvalArgs) -> CliResult<String> {
    let manifest = load_valid(&args.manifest)?;
    if let Some(kind) = args.kind {
        if kind != manifest.kind {
            return Err(CliError::validation(format!(
                "--kind {} does not match manifest kind {}",
                kind_name(kind),
                kind_name(manifest.kind)
            )));
        }
    }
    let ks: Vec<usize> = args.k.iter().map(|&k| k as usize).collect();
    let reports = evaluate_manifest(&manifest.load()?, &ks)?;
    let report = json!({
        "tool_version": TOOL_VERSION,
        "command": "eval",
        "manifest": args.manifest,
        "kind": manifest.kind,
        "k": ks,
        "metrics": reports.iter().map(summary_json).collect::<Vec<_>>(),
    });
    if let Some(dir) = &args.out {
        make_dir(dir)?;
        write_json(&dir.join("report.json"), &report)?;
        write_text(&dir.join("metrics.csv"), &metrics_csv(&reports))?;
        for r in &reports {
            let path = dir.join(format!("{}.csv", r.label()));
            let mut buf = Vec::new();
            r.write_csv(&mut buf).expect("in-memory write");
            fs::write(&path, buf).map_err(|e| runtime(&path, e))?;
        }
    }
    Ok(match args.format {
        Format::Json => to_json(&report),
        Format::Csv => metrics_csv(&reports),
        Format::Table => metrics_table(&reports),
    })
}

pub fn expand(args: &ExpandArgs) -> CliResult<String> {
    let queries = load_embeddings(&args.queries)?;
    let expansions = load_embeddings(&args.expansions)?;
    let fused = expand_matrix(&queries, &expansions, args.k as usize)?;
    save_embeddings(&fused, &args.out)?;
    Ok(to_json(&json!({ "rows": fused.rows(), "dim": fused.dim(), "k": args.k, "out": args.out })))
}

pub fn experiment(args: &ExperimentArgs) -> CliResult<String> {
    let mut cfg: ExperimentConfig = read_config(args.config.as_deref())?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(strategies) = &args.strategies {
        cfg.strategies = strategies.clone();
    }
    let report = run_experiment(&cfg)?;
    make_dir(&args.out)?;
    write_json(&args.out.join("experiment.json"), &report)?;
    let csv = experiment_csv(&report);
    let table = experiment_table(&report);
    write_text(&args.out.join("experiment.csv"), &csv)?;
    write_text(&args.out.join("experiment.txt"), &table)?;
    Ok(match args.format {
        Format::Json => to_json(&report),
        Format::Csv => csv,
        Format::Table => table,
    })
}

pub fn validate(args: &ValidateArgs) -> CliResult<String> {
    let manifest = BenchmarkManifest::from_path(&args.manifest)?;
    let summary = validate_manifest(&manifest);
    if !summary.is_valid() {
        return Err(CliError::Validation {
            message: format!("{}: {} manifest violation(s)", args.manifest.display(), summary.violations.len()),
            details: serde_json::to_value(&summary)?,
        });
    }
    Ok(to_json(&summary))
}
