//! Contrastive training of a vision tower against a strategy-adapted text
//! tower.

use std::io::Write;

use parabench_core::{EmbeddingMatrix, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::{DuoError, Result};
use crate::loss::{infonce_loss, LOGIT_SCALE_MAX};
use crate::optim::{adamw_step, AdamWConfig, AdamWState, LrSchedule};
use crate::params::{Grads, Param, ParamId, ParamStore};
use crate::rng::{SeededRng, Stream};
use crate::synth::PairCorpus;
use crate::tensor::Matrix;
use crate::tower::{BaseNetwork, Tower, TowerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: u64,
    pub base_lr: f64,
    pub adamw: AdamWConfig,
    pub logit_scale_init: f64,
    pub logit_scale_max: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 32,
            warmup_steps: 200,
            base_lr: 1e-3,
            adamw: AdamWConfig::default(),
            logit_scale_init: (1.0f64 / 0.07).ln(),
            logit_scale_max: LOGIT_SCALE_MAX,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn steps_per_epoch(&self, pairs: usize) -> usize {
        if self.batch_size == 0 {
            0
        } else {
            pairs / self.batch_size
        }
    }

    pub fn total_steps(&self, pairs: usize) -> u64 {
        (self.epochs * self.steps_per_epoch(pairs)) as u64
    }

    pub fn validate(&self, pairs: usize) -> Result<()> {
        let bad = |m: &str| Err(DuoError::InvalidConfig(m.into()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if pairs < self.batch_size {
            return bad("fewer pairs than one batch");
        }
        if !self.adamw.is_valid() {
            return bad("AdamW betas must lie in (0, 1), eps > 0, weight_decay >= 0");
        }
        if !(self.base_lr > 0.0) {
            return bad("base_lr must be positive");
        }
        if !(self.logit_scale_max > 0.0) || !self.logit_scale_init.is_finite() {
            return bad("logit scale must be finite with a positive cap");
        }
        let total = self.total_steps(pairs);
        if total > 0 && self.warmup_steps >= total {
            return bad("warmup_steps must be below the total step count");
        }
        Ok(())
    }

    pub fn schedule(&self, pairs: usize) -> LrSchedule {
        LrSchedule { base_lr: self.base_lr, warmup_steps: self.warmup_steps, total_steps: self.total_steps(pairs) }
    }
}

/// Vision and text towers sharing one parameter store with the learnable
/// logit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEncoder<T> {
    pub store: ParamStore<T>,
    pub vision: Tower,
    pub text: Tower,
    pub logit_scale: ParamId,
    pub logit_scale_max: f64,
}

impl<T: Scalar> DualEncoder<T> {
    /// Builds both towers. `vision_init` seeds the vision hidden layers from
    /// a pretrained base; otherwise they start random.
    pub fn new(
        vision: &TowerSpec,
        text: &TowerSpec,
        text_base: &BaseNetwork<T>,
        vision_init: Option<&BaseNetwork<T>>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        if vision.embed_dim != text.embed_dim {
            return Err(DuoError::ShapeMismatch { expected: vision.embed_dim, found: text.embed_dim });
        }
        if text.strategy.base_frozen() && !text_base.is_frozen() {
            return Err(DuoError::InvalidConfig("frozen strategies need a base flagged immutable".into()));
        }
        let mut store = ParamStore::new();
        let vision = Tower::trainable(vision, &mut store, "vision", vision_init, cfg.seed)?;
        let text = Tower::text(text, text_base, &mut store, cfg.seed)?;
        let logit_scale = store.push(Param {
            name: "logit_scale".into(),
            rows: 1,
            cols: 1,
            data: vec![T::lit(cfg.logit_scale_init)],
            frozen: false,
            decay: false,
        });
        Ok(Self { store, vision, text, logit_scale, logit_scale_max: cfg.logit_scale_max })
    }

    pub fn scale_param(&self) -> T {
        self.store.data(self.logit_scale)[0]
    }

    /// Batch loss and the gradient of every tensor, frozen ones included.
    pub fn loss_and_grads(&self, images: &Matrix<T>, texts: &Matrix<T>) -> Result<(T, Grads<T>)> {
        let (zi, ci) = self.vision.forward(&self.store, images)?;
        let (zt, ct) = self.text.forward(&self.store, texts)?;
        let out = infonce_loss(&zi, &zt, self.scale_param(), T::lit(self.logit_scale_max))?;
        let mut grads = self.store.zero_grads();
        self.vision.backward(&self.store, &mut grads, &ci, &out.grad_image);
        self.text.backward(&self.store, &mut grads, &ct, &out.grad_text);
        grads.get_mut(self.logit_scale)[0] = out.grad_logit_scale;
        Ok((out.loss, grads))
    }

    pub fn embed_images(&self, x: &Matrix<f64>) -> Result<Matrix<T>> {
        self.vision.embed(&self.store, &x.cast())
    }

    pub fn embed_texts(&self, x: &Matrix<f64>) -> Result<Matrix<T>> {
        self.text.embed(&self.store, &x.cast())
    }
}

/// Converts tower outputs to unit-norm f32 rows for the evaluation pipeline.
pub fn to_embeddings<T: Scalar>(z: &Matrix<T>) -> Result<EmbeddingMatrix> {
    let m = EmbeddingMatrix::from_f64(z.rows, z.cols, &z.to_f64_vec())?;
    Ok(parabench_core::l2_normalize(&m)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: DualEncoder<T>,
    pub log: Vec<LossRecord>,
}

impl<T> TrainOutcome<T> {
    pub fn final_loss(&self) -> Option<f64> {
        self.log.last().map(|r| r.loss)
    }
}

/// Writes `step,lr,loss` rows with a header.
pub fn write_loss_csv<W: Write>(mut out: W, log: &[LossRecord]) -> std::io::Result<()> {
    writeln!(out, "step,lr,loss")?;
    for r in log {
        writeln!(out, "{},{},{}", r.step, r.lr, r.loss)?;
    }
    Ok(())
}

/// Minimizes InfoNCE over the pair corpus, updating only tensors not flagged
/// frozen. Batches are consecutive slices of a fresh permutation per epoch;
/// a trailing partial batch is dropped.
pub fn train<T: Scalar>(mut model: DualEncoder<T>, pairs: &PairCorpus, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let n = pairs.len();
    cfg.validate(n)?;
    let images: Matrix<T> = pairs.images.cast();
    let texts: Matrix<T> = pairs.texts.cast();
    let schedule = cfg.schedule(n);
    let cap = T::lit(cfg.logit_scale_max.ln());
    let mut state = AdamWState::new(&model.store);
    let mut rng = SeededRng::new(cfg.seed, Stream::Batches);
    let mut log = Vec::with_capacity(schedule.total_steps as usize);
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        let order = rng.permutation(n);
        for batch in order.chunks_exact(cfg.batch_size) {
            step += 1;
            let (loss, grads) = model.loss_and_grads(&images.select_rows(batch), &texts.select_rows(batch))?;
            let loss64 = loss.to_f64().unwrap_or(f64::NAN);
            if !loss64.is_finite() || !grads.all_finite() {
                return Err(DuoError::DivergedTraining { step });
            }
            let lr = schedule.lr_at(step);
            adamw_step(&mut model.store, &grads, &mut state, step, lr, &cfg.adamw);
            let s = &mut model.store.get_mut(model.logit_scale).data[0];
            if *s > cap {
                *s = cap;
            }
            log.push(LossRecord { step, lr, loss: loss64 });
        }
    }
    Ok(TrainOutcome { model, log })
}
