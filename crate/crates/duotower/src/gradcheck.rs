//! Finite-difference verification of the analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::layers::Block;
use crate::rng::{SeededRng, Stream};
use crate::tensor::Matrix;
use crate::tower::{BaseNetwork, Role, Strategy, TowerSpec};
use crate::train::{DualEncoder, TrainConfig};

/// Denominator floor of the relative error; gradients smaller than this are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - f| / max(|a|, |f|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> usize {
        self.tensors.iter().map(|t| t.entries).sum()
    }
}

/// Compares every entry of every tensor, frozen ones included, against the
/// fourth-order central difference
/// `(8(L(θ+h) - L(θ-h)) - (L(θ+2h) - L(θ-2h))) / 12h`, whose `O(h⁴)`
/// truncation allows a step large enough to keep roundoff below the
/// smallest gradients.
pub fn check_gradients(model: &DualEncoder<f64>, images: &Matrix<f64>, texts: &Matrix<f64>, h: f64) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(images, texts)?;
    let mut probe = model.clone();
    let mut tensors = Vec::new();
    let ids: Vec<_> = model.store.iter().map(|(id, p)| (id, p.name.clone(), p.len())).collect();
    for (id, name, len) in ids {
        let mut worst = 0.0f64;
        for i in 0..len {
            let theta = model.store.data(id)[i];
            let mut at = |delta: f64| {
                probe.store.get_mut(id).data[i] = theta + delta;
                probe.loss_and_grads(images, texts).map(|(l, _)| l)
            };
            let near = at(h)? - at(-h)?;
            let far = at(2.0 * h)? - at(-2.0 * h)?;
            probe.store.get_mut(id).data[i] = theta;
            worst = worst.max(relative_error(grads.get(id)[i], (8.0 * near - far) / (12.0 * h)));
        }
        tensors.push(TensorCheck { name, entries: len, max_rel_error: worst });
    }
    Ok(GradCheckReport { tensors })
}

/// Shape of one randomized check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckCase {
    pub strategy: Strategy,
    pub image_dim: usize,
    pub text_dim: usize,
    pub vision_hidden: Vec<usize>,
    pub text_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub alignment_layers: usize,
    pub batch: usize,
    pub logit_scale: f64,
    pub seed: u64,
}

impl CheckCase {
    /// A small random case for `strategy`; widths stay even so adapters fit.
    pub fn random(strategy: Strategy, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, Stream::Eval);
        let even = |rng: &mut SeededRng| 2 * (1 + rng.below(3));
        let vision_hidden = (0..rng.below(2)).map(|_| 2 + rng.below(4)).collect();
        let text_hidden = (0..1 + rng.below(2)).map(|_| even(&mut rng)).collect();
        Self {
            strategy,
            image_dim: 2 + rng.below(5),
            text_dim: 2 + rng.below(5),
            vision_hidden,
            text_hidden,
            embed_dim: 2 + rng.below(3),
            alignment_layers: 1 + rng.below(3),
            batch: 2 + rng.below(4),
            logit_scale: rng.uniform_in(0.0, 3.0),
            seed,
        }
    }

    /// Builds the model with every tensor redrawn from `N(0, 0.5²)` so zero
    /// initializations do not mask gradient paths, plus a matching batch.
    pub fn build(&self) -> Result<(DualEncoder<f64>, Matrix<f64>, Matrix<f64>)> {
        let mut base = BaseNetwork::<f64>::init(self.text_dim, &self.text_hidden, self.seed, Stream::InitBase);
        if self.strategy.base_frozen() {
            base.freeze();
        }
        let vision = TowerSpec::vision(self.image_dim, self.vision_hidden.clone(), self.embed_dim);
        let mut text = TowerSpec::text(self.text_dim, self.text_hidden.clone(), self.embed_dim, self.strategy);
        text.alignment_layers = self.alignment_layers;
        let cfg = TrainConfig { logit_scale_init: self.logit_scale, seed: self.seed, ..TrainConfig::default() };
        let mut model = DualEncoder::new(&vision, &text, &base, None, &cfg)?;
        let mut rng = SeededRng::new(self.seed, Stream::Batches);
        let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
        for id in ids {
            if id == model.logit_scale {
                continue;
            }
            for v in &mut model.store.get_mut(id).data {
                *v = 0.5 * rng.gaussian();
            }
        }
        let images = Matrix::from_fn(self.batch, self.image_dim, |_, _| rng.gaussian());
        let texts = Matrix::from_fn(self.batch, self.text_dim, |_, _| rng.gaussian());
        Ok((model, images, texts))
    }
}

/// Roles present in the text tower, for coverage assertions.
pub fn text_roles(model: &DualEncoder<f64>) -> Vec<Role> {
    let mut roles: Vec<Role> = model.text.roles.clone();
    roles.dedup();
    roles
}

/// Number of adapter blocks in the text tower.
pub fn adapter_blocks(model: &DualEncoder<f64>) -> usize {
    model.text.blocks.iter().filter(|b| matches!(b, Block::Adapter { .. })).count()
}
