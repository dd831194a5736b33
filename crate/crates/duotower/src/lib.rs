//! Desk-scale dual-encoder laboratory.
//!
//! A synthetic paraphrase benchmark ([`synth`]), MLP vision and text towers
//! with four text-side adaptation strategies ([`tower`]), symmetric InfoNCE
//! ([`loss`]), AdamW with warmup and cosine decay ([`optim`]), latent-recovery
//! pretraining of the text base ([`pretrain`]), the contrastive trainer
//! ([`train`]) and the strategy comparison ([`experiment`]).
//!
//! Gradients are hand-written and everything is generic over
//! [`parabench_core::Scalar`]; training runs in `f64`.

pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod params;
pub mod pretrain;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod tower;
pub mod train;

pub use error::{DuoError, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, RunResult, StrategySummary, TOOL_VERSION};
pub use loss::{infonce_loss, InfoNceOutput, LOGIT_SCALE_MAX};
pub use optim::{adamw_step, AdamWConfig, AdamWState, LrSchedule};
pub use params::{Grads, Param, ParamId, ParamStore};
pub use pretrain::{pretrain_base, pretrain_text_base, PretrainConfig, PretrainReport, PretrainedBase};
pub use rng::{SeededRng, Stream};
pub use synth::{decode_latents, synth_generate, SynthConfig, SynthData};
pub use tensor::Matrix;
pub use tower::{BaseNetwork, ProjectionKind, Role, Strategy, Tower, TowerSpec};
pub use train::{train, DualEncoder, LossRecord, TrainConfig, TrainOutcome};

pub type Matrix64 = Matrix<f64>;
pub type ParamStore64 = ParamStore<f64>;
pub type BaseNetwork64 = BaseNetwork<f64>;
pub type DualEncoder64 = DualEncoder<f64>;
