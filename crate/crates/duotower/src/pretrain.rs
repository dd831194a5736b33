//! Latent-recovery pretraining for tower bases.
//!
//! A base plus a linear readout is regressed onto the latent concept; the
//! readout is then discarded. Trained on captions from every template, this
//! gives a text base that maps paraphrases of one concept to nearby features.

use parabench_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{DuoError, Result};
use crate::optim::{adamw_step, AdamWConfig, AdamWState, LrSchedule};
use crate::params::ParamStore;
use crate::rng::{SeededRng, Stream};
use crate::synth::RegressionCorpus;
use crate::tensor::Matrix;
use crate::tower::{BaseNetwork, Role, Tower, TowerSpec};
use crate::layers::Block;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: u64,
    /// Trailing fraction of the corpus held out for the reported error.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 64, lr: 3e-3, warmup_steps: 50, holdout_fraction: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub steps: u64,
    pub train_mse: f64,
    pub holdout_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedBase<T> {
    pub base: BaseNetwork<T>,
    pub report: PretrainReport,
}

fn mse<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>) -> f64 {
    let n = pred.data.len().max(1) as f64;
    pred.data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| {
            let d = (p - t).to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum::<f64>()
        / n
}

/// Trains hidden layers of the given widths plus a linear readout to predict
/// the corpus targets by mean squared error.
pub fn pretrain_base<T: Scalar>(corpus: &RegressionCorpus, hidden_dims: &[usize], cfg: &PretrainConfig, stream: Stream) -> Result<PretrainedBase<T>> {
    let n = corpus.inputs.rows;
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(DuoError::InvalidConfig("holdout_fraction must lie in [0, 1)".into()));
    }
    let holdout = ((n as f64) * cfg.holdout_fraction).ceil() as usize;
    let n_train = n - holdout;
    if cfg.batch_size == 0 || (cfg.epochs > 0 && n_train < cfg.batch_size) {
        return Err(DuoError::InvalidConfig(format!("{n_train} training rows cannot fill batches of {}", cfg.batch_size)));
    }

    let inputs: Matrix<T> = corpus.inputs.cast();
    let targets: Matrix<T> = corpus.targets.cast();
    let init = BaseNetwork::<T>::init(inputs.cols, hidden_dims, cfg.seed, stream);
    let spec = TowerSpec::vision(inputs.cols, hidden_dims.to_vec(), targets.cols);
    let mut store = ParamStore::new();
    let net = Tower::trainable(&spec, &mut store, "pretrain", Some(&init), cfg.seed ^ 0x5eed)?;

    let per_epoch = n_train / cfg.batch_size;
    let total = (cfg.epochs * per_epoch) as u64;
    let schedule = LrSchedule { base_lr: cfg.lr, warmup_steps: cfg.warmup_steps.min(total / 2), total_steps: total };
    let adam = AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() };
    let mut state = AdamWState::new(&store);
    let mut rng = SeededRng::new(cfg.seed, Stream::Batches);
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        let order = rng.permutation(n_train);
        for chunk in order.chunks_exact(cfg.batch_size) {
            step += 1;
            let x = inputs.select_rows(chunk);
            let y = targets.select_rows(chunk);
            let (pred, cache) = net.forward(&store, &x)?;
            let scale = T::lit(2.0 / pred.data.len() as f64);
            let mut d = pred.clone();
            for (g, &t) in d.data.iter_mut().zip(&y.data) {
                *g = (*g - t) * scale;
            }
            let mut grads = store.zero_grads();
            net.backward(&store, &mut grads, &cache, &d);
            if !grads.all_finite() {
                return Err(DuoError::DivergedTraining { step });
            }
            adamw_step(&mut store, &grads, &mut state, step, schedule.lr_at(step), &adam);
        }
    }

    let eval = |rows: std::ops::Range<usize>| -> Result<f64> {
        if rows.is_empty() {
            return Ok(f64::NAN);
        }
        let idx: Vec<usize> = rows.collect();
        let pred = net.embed(&store, &inputs.select_rows(&idx))?;
        Ok(mse(&pred, &targets.select_rows(&idx)))
    };
    let report = PretrainReport { steps: step, train_mse: eval(0..n_train)?, holdout_mse: eval(n_train..n)? };
    if !report.train_mse.is_finite() {
        return Err(DuoError::DivergedTraining { step });
    }

    let mut base = init;
    for (block, target) in net.blocks_with_role(Role::Base).zip(base.layers.clone()) {
        let Block::DenseGelu(d) = block else { unreachable!("base blocks are dense") };
        for (src, dst) in d.ids().into_iter().zip(target.ids()) {
            base.store.get_mut(dst).data = store.get(src).data.clone();
        }
    }
    Ok(PretrainedBase { base, report })
}

/// Pretrains the text base on captions from every template and flags it
/// immutable.
pub fn pretrain_text_base<T: Scalar>(corpus: &RegressionCorpus, hidden_dims: &[usize], cfg: &PretrainConfig) -> Result<PretrainedBase<T>> {
    let mut out = pretrain_base(corpus, hidden_dims, cfg, Stream::InitBase)?;
    out.base.freeze();
    Ok(out)
}
