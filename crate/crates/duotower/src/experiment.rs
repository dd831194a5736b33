//! Strategy comparison on the synthetic paraphrase benchmark, and export of
//! trained embeddings for the evaluation tools.

use std::fs;
use std::path::Path;

use parabench_core::metrics::{eval_paraphrase, eval_retrieval};
use parabench_core::{save_embeddings, BenchmarkKind, BenchmarkManifest, EmbeddingMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{DuoError, Result};
use crate::pretrain::{pretrain_base, pretrain_text_base, PretrainConfig, PretrainReport};
use crate::rng::Stream;
use crate::synth::{synth_generate, RegressionCorpus, SynthBenchmark, SynthConfig, SynthData};
use crate::tower::{BaseNetwork, Strategy, TowerSpec};
use crate::train::{to_embeddings, train, DualEncoder, TrainConfig, TrainOutcome};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub vision_hidden: Vec<usize>,
    pub text_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub alignment_layers: usize,
    pub adapter_reduction: usize,
    pub train: TrainConfig,
    pub pretrain: PretrainConfig,
    /// Also regress images onto latents before contrastive training and start
    /// the vision tower from the result.
    pub pretrain_vision: bool,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub recall_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            vision_hidden: vec![64],
            text_hidden: vec![48, 48],
            embed_dim: 16,
            alignment_layers: 6,
            adapter_reduction: 2,
            train: TrainConfig::default(),
            pretrain: PretrainConfig::default(),
            pretrain_vision: false,
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            k: 10,
            recall_k: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn vision_spec(&self) -> TowerSpec {
        let mut spec = TowerSpec::vision(self.synth.image_dim, self.vision_hidden.clone(), self.embed_dim);
        spec.adapter_reduction = self.adapter_reduction;
        spec
    }

    pub fn text_spec(&self, strategy: Strategy) -> TowerSpec {
        let mut spec = TowerSpec::text(self.synth.text_dim, self.text_hidden.clone(), self.embed_dim, strategy);
        spec.alignment_layers = self.alignment_layers;
        spec.adapter_reduction = self.adapter_reduction;
        spec
    }

    /// The config with every seed field set to `seed`.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
        cfg.pretrain.seed = seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.seeds.is_empty() {
            return Err(DuoError::InvalidConfig("need at least one seed".into()));
        }
        if self.strategies.is_empty() {
            return Err(DuoError::InvalidConfig("need at least one strategy".into()));
        }
        if self.k == 0 || self.recall_k == 0 || self.k > self.synth.n_gallery || self.recall_k > self.synth.n_gallery {
            return Err(DuoError::InvalidConfig("k and recall_k must lie in 1..=n_gallery".into()));
        }
        self.vision_spec().validate()?;
        for &s in &self.strategies {
            self.text_spec(s).validate()?;
        }
        self.train.validate(self.synth.n_train)
    }
}

/// Everything trained once per seed and shared by all strategies.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub config: ExperimentConfig,
    pub data: SynthData,
    pub text_base: BaseNetwork<f64>,
    pub text_report: PretrainReport,
    pub vision_base: Option<BaseNetwork<f64>>,
}

impl SeedContext {
    /// `config` must already be seeded.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let data = synth_generate(&config.synth)?;
        let text = pretrain_text_base::<f64>(&data.pretrain, &config.text_hidden, &config.pretrain)?;
        let vision_base = if config.pretrain_vision {
            let corpus = RegressionCorpus {
                inputs: data.pairs.images.clone(),
                targets: data.pairs.latents.clone(),
                templates: vec![0; data.pairs.len()],
            };
            Some(pretrain_base::<f64>(&corpus, &config.vision_hidden, &config.pretrain, Stream::InitVision)?.base)
        } else {
            None
        };
        Ok(Self { config: config.clone(), data, text_base: text.base, text_report: text.report, vision_base })
    }

    pub fn train(&self, strategy: Strategy) -> Result<TrainOutcome<f64>> {
        let c = &self.config;
        let model =
            DualEncoder::new(&c.vision_spec(), &c.text_spec(strategy), &self.text_base, self.vision_base.as_ref(), &c.train)?;
        train(model, &self.data.pairs, &c.train)
    }
}

/// Unit-norm embeddings of the benchmark splits.
#[derive(Debug, Clone)]
pub struct BenchEmbeddings {
    pub gallery: EmbeddingMatrix,
    pub queries: EmbeddingMatrix,
    pub paraphrases: EmbeddingMatrix,
}

pub fn embed_benchmark(model: &DualEncoder<f64>, bench: &SynthBenchmark) -> Result<BenchEmbeddings> {
    Ok(BenchEmbeddings {
        gallery: to_embeddings(&model.embed_images(&bench.gallery)?)?,
        queries: to_embeddings(&model.embed_texts(&bench.queries)?)?,
        paraphrases: to_embeddings(&model.embed_texts(&bench.paraphrases)?)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchScores {
    pub ao: f64,
    pub js: f64,
    pub recall: f64,
}

pub fn score_benchmark(e: &BenchEmbeddings, relevance: &[Vec<usize>], k: usize, recall_k: usize) -> Result<BenchScores> {
    let para = eval_paraphrase(&e.queries, &e.paraphrases, &e.gallery, &[k])?;
    let recall = eval_retrieval(&e.queries, &e.gallery, relevance, &[recall_k])?;
    Ok(BenchScores { ao: para[0].aggregate, js: para[1].aggregate, recall: recall[0].aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub ao: f64,
    pub js: f64,
    pub recall: f64,
    pub final_loss: f64,
    pub trainable_params: usize,
    pub pretrain_holdout_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub ao: f64,
    pub js: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub means: Vec<StrategySummary>,
}

impl ExperimentReport {
    pub fn runs_for(&self, strategy: Strategy) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.strategy == strategy)
    }

    pub fn mean(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.means.iter().find(|m| m.strategy == strategy)
    }
}

/// Trains and scores every (seed, strategy) pair. Runs are ordered by seed,
/// then by the configured strategy order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut runs = Vec::with_capacity(config.seeds.len() * config.strategies.len());
    for &seed in &config.seeds {
        let ctx = SeedContext::prepare(&config.seeded(seed))?;
        for &strategy in &config.strategies {
            let out = ctx.train(strategy)?;
            let emb = embed_benchmark(&out.model, &ctx.data.bench)?;
            let s = score_benchmark(&emb, &ctx.data.bench.relevance, config.k, config.recall_k)?;
            runs.push(RunResult {
                strategy,
                seed,
                ao: s.ao,
                js: s.js,
                recall: s.recall,
                final_loss: out.final_loss().unwrap_or(f64::NAN),
                trainable_params: out.model.text.trainable_count(&out.model.store),
                pretrain_holdout_mse: ctx.text_report.holdout_mse,
            });
        }
    }
    let means = config
        .strategies
        .iter()
        .map(|&strategy| {
            let rs: Vec<_> = runs.iter().filter(|r| r.strategy == strategy).collect();
            let mean = |f: fn(&RunResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            StrategySummary { strategy, runs: rs.len(), ao: mean(|r| r.ao), js: mean(|r| r.js), recall: mean(|r| r.recall) }
        })
        .collect();
    Ok(ExperimentReport { tool_version: TOOL_VERSION.into(), config: config.clone(), runs, means })
}

/// File names written by [`export_benchmark`].
pub const GALLERY_FILE: &str = "gallery.pemb";
pub const QUERIES_FILE: &str = "queries.pemb";
pub const PARAPHRASES_FILE: &str = "paraphrases.pemb";
pub const PARAPHRASE_MANIFEST: &str = "paraphrase.json";
pub const RETRIEVAL_MANIFEST: &str = "retrieval.json";

/// Writes the three embedding files plus a paraphrase and a retrieval
/// manifest referencing them by relative path.
pub fn export_benchmark(dir: &Path, e: &BenchEmbeddings, relevance: &[Vec<usize>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|err| parabench_core::Error::io(dir, err))?;
    save_embeddings(&e.gallery, dir.join(GALLERY_FILE))?;
    save_embeddings(&e.queries, dir.join(QUERIES_FILE))?;
    save_embeddings(&e.paraphrases, dir.join(PARAPHRASES_FILE))?;

    let mut para = BenchmarkManifest::new(BenchmarkKind::Paraphrase, QUERIES_FILE);
    para.paraphrases = Some(PARAPHRASES_FILE.into());
    para.gallery = Some(GALLERY_FILE.into());
    para.relevance = Some(relevance.to_vec());
    para.save(dir.join(PARAPHRASE_MANIFEST))?;

    let mut ret = BenchmarkManifest::new(BenchmarkKind::Retrieval, QUERIES_FILE);
    ret.gallery = Some(GALLERY_FILE.into());
    ret.relevance = Some(relevance.to_vec());
    ret.save(dir.join(RETRIEVAL_MANIFEST))?;
    Ok(())
}
