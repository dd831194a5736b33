//! MLP towers and the text-tower adaptation strategies.

use parabench_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{DuoError, Result};
use crate::layers::{Block, BlockCache, Dense};
use crate::params::{Grads, Param, ParamStore};
use crate::rng::{SeededRng, Stream};
use crate::tensor::Matrix;

/// How the text tower reuses its pretrained base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Base weights are trained along with everything else.
    Finetune,
    /// Base weights are locked; only the projection head trains.
    Frozen,
    /// Locked base with a trainable residual bottleneck after every layer.
    FrozenBottleneck,
    /// Locked base followed by trainable residual alignment layers.
    FrozenAlignment,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::Finetune, Strategy::Frozen, Strategy::FrozenBottleneck, Strategy::FrozenAlignment];

    pub fn base_frozen(self) -> bool {
        self != Strategy::Finetune
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Finetune => "finetune",
            Strategy::Frozen => "frozen",
            Strategy::FrozenBottleneck => "frozen_bottleneck",
            Strategy::FrozenAlignment => "frozen_alignment",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = DuoError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| DuoError::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Linear,
    /// Dense + GELU + dense, hidden width equal to the last tower width.
    Mlp2,
}

fn default_alignment_layers() -> usize {
    6
}

fn default_reduction() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_alignment_layers")]
    pub alignment_layers: usize,
    #[serde(default = "default_reduction")]
    pub adapter_reduction: usize,
    pub projection: ProjectionKind,
}

fn default_strategy() -> Strategy {
    Strategy::Finetune
}

impl TowerSpec {
    /// Trainable-from-scratch tower with a linear projection.
    pub fn vision(input_dim: usize, hidden_dims: Vec<usize>, embed_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            embed_dim,
            strategy: Strategy::Finetune,
            alignment_layers: 0,
            adapter_reduction: default_reduction(),
            projection: ProjectionKind::Linear,
        }
    }

    /// Text tower over a pretrained base, with a 2-layer MLP projection.
    pub fn text(input_dim: usize, hidden_dims: Vec<usize>, embed_dim: usize, strategy: Strategy) -> Self {
        Self {
            input_dim,
            hidden_dims,
            embed_dim,
            strategy,
            alignment_layers: default_alignment_layers(),
            adapter_reduction: default_reduction(),
            projection: ProjectionKind::Mlp2,
        }
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self { strategy, ..self.clone() }
    }

    pub fn last_width(&self) -> usize {
        *self.hidden_dims.last().unwrap_or(&self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(DuoError::InvalidConfig("tower dimensions must be positive".into()));
        }
        if self.strategy == Strategy::FrozenBottleneck {
            if self.hidden_dims.is_empty() {
                return Err(DuoError::InvalidConfig("bottleneck adapters need hidden layers".into()));
            }
            if self.adapter_reduction == 0 || self.hidden_dims.iter().any(|h| h % self.adapter_reduction != 0) {
                return Err(DuoError::InvalidConfig(format!(
                    "adapter reduction {} must divide every hidden width",
                    self.adapter_reduction
                )));
            }
        }
        Ok(())
    }

    fn dense_count(input: usize, output: usize) -> usize {
        input * output + output
    }

    /// Parameters in the base layers.
    pub fn base_param_count(&self) -> usize {
        let mut prev = self.input_dim;
        let mut n = 0;
        for &h in &self.hidden_dims {
            n += Self::dense_count(prev, h);
            prev = h;
        }
        n
    }

    pub fn projection_param_count(&self) -> usize {
        let h = self.last_width();
        match self.projection {
            ProjectionKind::Linear => Self::dense_count(h, self.embed_dim),
            ProjectionKind::Mlp2 => Self::dense_count(h, h) + Self::dense_count(h, self.embed_dim),
        }
    }

    pub fn adapter_param_count(&self) -> usize {
        self.hidden_dims
            .iter()
            .map(|&h| {
                let r = h / self.adapter_reduction;
                Self::dense_count(h, r) + Self::dense_count(r, h)
            })
            .sum()
    }

    pub fn alignment_param_count(&self) -> usize {
        let h = self.last_width();
        self.alignment_layers * Self::dense_count(h, h)
    }

    /// Closed-form count of parameters the strategy trains.
    pub fn trainable_param_count(&self) -> usize {
        let aux = match self.strategy {
            Strategy::Finetune => self.base_param_count(),
            Strategy::Frozen => 0,
            Strategy::FrozenBottleneck => self.adapter_param_count(),
            Strategy::FrozenAlignment => self.alignment_param_count(),
        };
        aux + self.projection_param_count()
    }
}

/// Which part of a tower a block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Base,
    Adapter,
    Alignment,
    Projection,
}

/// Stack of hidden `dense + GELU` layers, the part a tower can inherit from
/// pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseNetwork<T> {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub store: ParamStore<T>,
    pub layers: Vec<Dense>,
}

impl<T: Scalar> BaseNetwork<T> {
    pub fn init(input_dim: usize, hidden_dims: &[usize], seed: u64, stream: Stream) -> Self {
        let mut rng = SeededRng::new(seed, stream);
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(hidden_dims.len());
        let mut prev = input_dim;
        for (i, &h) in hidden_dims.iter().enumerate() {
            layers.push(Dense::init(&mut store, &format!("base.{i}"), prev, h, &mut rng));
            prev = h;
        }
        Self { input_dim, hidden_dims: hidden_dims.to_vec(), store, layers }
    }

    pub fn output_dim(&self) -> usize {
        *self.hidden_dims.last().unwrap_or(&self.input_dim)
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        self.layers.iter().fold(x.clone(), |h, d| Block::DenseGelu(*d).forward(&self.store, h).0)
    }

    /// Flags every base tensor immutable.
    pub fn freeze(&mut self) {
        for d in &self.layers {
            for id in d.ids() {
                self.store.set_frozen(id, true);
            }
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.store.iter().all(|(_, p)| p.frozen)
    }

    /// The raw weight tensors in layer order.
    pub fn tensors(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|d| d.ids()).map(|id| self.store.get(id)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub spec: TowerSpec,
    pub blocks: Vec<Block>,
    pub roles: Vec<Role>,
}

#[derive(Debug, Clone)]
pub struct TowerCache<T> {
    caches: Vec<BlockCache<T>>,
}

impl Tower {
    /// A tower whose hidden layers start from `init` (or random weights when
    /// `None`) and all train. Used for the vision side.
    pub fn trainable<T: Scalar>(
        spec: &TowerSpec,
        store: &mut ParamStore<T>,
        prefix: &str,
        init: Option<&BaseNetwork<T>>,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let mut rng = SeededRng::new(seed, Stream::InitVision);
        let mut blocks = Vec::new();
        let mut roles = Vec::new();
        match init {
            Some(base) => {
                check_base(spec, base)?;
                for (i, d) in base.layers.iter().enumerate() {
                    blocks.push(Block::DenseGelu(copy_dense(store, base, d, &format!("{prefix}.base.{i}"), false)));
                    roles.push(Role::Base);
                }
            }
            None => {
                let mut prev = spec.input_dim;
                for (i, &h) in spec.hidden_dims.iter().enumerate() {
                    blocks.push(Block::DenseGelu(Dense::init(store, &format!("{prefix}.base.{i}"), prev, h, &mut rng)));
                    roles.push(Role::Base);
                    prev = h;
                }
            }
        }
        push_projection(spec, store, prefix, &mut rng, &mut blocks, &mut roles);
        Ok(Self { spec: spec.clone(), blocks, roles })
    }

    /// Text tower over a pretrained base, laid out per `spec.strategy`.
    ///
    /// Projection, adapter and alignment weights come from separate random
    /// streams, so towers that differ only in strategy share the projection.
    pub fn text<T: Scalar>(spec: &TowerSpec, base: &BaseNetwork<T>, store: &mut ParamStore<T>, seed: u64) -> Result<Self> {
        spec.validate()?;
        check_base(spec, base)?;
        let frozen = spec.strategy.base_frozen();
        let mut adapter_rng = SeededRng::new(seed, Stream::InitAdapters);
        let mut blocks = Vec::new();
        let mut roles = Vec::new();
        for (i, d) in base.layers.iter().enumerate() {
            blocks.push(Block::DenseGelu(copy_dense(store, base, d, &format!("text.base.{i}"), frozen)));
            roles.push(Role::Base);
            if spec.strategy == Strategy::FrozenBottleneck {
                let h = d.output;
                let r = h / spec.adapter_reduction;
                let down = Dense::init(store, &format!("text.adapter.{i}.down"), h, r, &mut adapter_rng);
                let up = Dense::init_zero(store, &format!("text.adapter.{i}.up"), r, h);
                blocks.push(Block::Adapter { down, up });
                roles.push(Role::Adapter);
            }
        }
        if spec.strategy == Strategy::FrozenAlignment {
            let mut rng = SeededRng::new(seed, Stream::InitAlignment);
            let h = spec.last_width();
            for j in 0..spec.alignment_layers {
                let d = Dense::init(store, &format!("text.align.{j}"), h, h, &mut rng);
                blocks.push(Block::ResidualGelu(d));
                roles.push(Role::Alignment);
            }
        }
        let mut rng = SeededRng::new(seed, Stream::InitProjection);
        push_projection(spec, store, "text", &mut rng, &mut blocks, &mut roles);
        Ok(Self { spec: spec.clone(), blocks, roles })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.last().map(Block::output_dim).unwrap_or(self.spec.input_dim)
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Matrix<T>) -> Result<(Matrix<T>, TowerCache<T>)> {
        if x.cols != self.input_dim() {
            return Err(DuoError::ShapeMismatch { expected: self.input_dim(), found: x.cols });
        }
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(store, h);
            caches.push(cache);
            h = y;
        }
        Ok((h, TowerCache { caches }))
    }

    pub fn embed<T: Scalar>(&self, store: &ParamStore<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(store, x)?.0)
    }

    /// Backpropagates `d_out` and accumulates every tensor's gradient, frozen
    /// or not; the optimizer is what skips frozen tensors.
    pub fn backward<T: Scalar>(&self, store: &ParamStore<T>, grads: &mut Grads<T>, cache: &TowerCache<T>, d_out: &Matrix<T>) {
        let mut dy = d_out.clone();
        for (i, (block, c)) in self.blocks.iter().zip(&cache.caches).enumerate().rev() {
            match block.backward(store, grads, c, &dy, i > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }

    pub fn blocks_with_role(&self, role: Role) -> impl Iterator<Item = &Block> {
        self.blocks.iter().zip(&self.roles).filter(move |(_, r)| **r == role).map(|(b, _)| b)
    }

    pub fn trainable_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.blocks
            .iter()
            .flat_map(Block::param_ids)
            .map(|id| store.get(id))
            .filter(|p| !p.frozen)
            .map(Param::len)
            .sum()
    }
}

fn check_base<T: Scalar>(spec: &TowerSpec, base: &BaseNetwork<T>) -> Result<()> {
    if base.input_dim != spec.input_dim {
        return Err(DuoError::ShapeMismatch { expected: spec.input_dim, found: base.input_dim });
    }
    if base.hidden_dims != spec.hidden_dims {
        return Err(DuoError::InvalidConfig(format!(
            "base hidden widths {:?} do not match tower spec {:?}",
            base.hidden_dims, spec.hidden_dims
        )));
    }
    Ok(())
}

fn copy_dense<T: Scalar>(store: &mut ParamStore<T>, base: &BaseNetwork<T>, d: &Dense, name: &str, frozen: bool) -> Dense {
    let mut copy = |id, suffix: &str| {
        let src = base.store.get(id);
        store.push(Param { name: format!("{name}.{suffix}"), frozen, ..src.clone() })
    };
    let weight = copy(d.weight, "weight");
    let bias = copy(d.bias, "bias");
    Dense { weight, bias, input: d.input, output: d.output }
}

fn push_projection<T: Scalar>(
    spec: &TowerSpec,
    store: &mut ParamStore<T>,
    prefix: &str,
    rng: &mut SeededRng,
    blocks: &mut Vec<Block>,
    roles: &mut Vec<Role>,
) {
    let h = spec.last_width();
    match spec.projection {
        ProjectionKind::Linear => {
            blocks.push(Block::Linear(Dense::init(store, &format!("{prefix}.proj"), h, spec.embed_dim, rng)));
            roles.push(Role::Projection);
        }
        ProjectionKind::Mlp2 => {
            blocks.push(Block::DenseGelu(Dense::init(store, &format!("{prefix}.proj.0"), h, h, rng)));
            blocks.push(Block::Linear(Dense::init(store, &format!("{prefix}.proj.1"), h, spec.embed_dim, rng)));
            roles.extend([Role::Projection, Role::Projection]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(strategy: Strategy) -> TowerSpec {
        TowerSpec::text(12, vec![8, 8], 4, strategy)
    }

    fn input(rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin())
    }

    fn build(strategy: Strategy, base: &BaseNetwork<f64>) -> (Tower, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let tower = Tower::text(&spec(strategy), base, &mut store, 5).unwrap();
        (tower, store)
    }

    #[test]
    fn zero_up_adapters_and_empty_alignment_are_identity() {
        let mut base = BaseNetwork::<f64>::init(12, &[8, 8], 1, Stream::InitBase);
        base.freeze();
        let x = input(5, 12);
        let (t, s) = build(Strategy::Frozen, &base);
        let reference = t.embed(&s, &x).unwrap();
        let (t, s) = build(Strategy::FrozenBottleneck, &base);
        assert_eq!(t.embed(&s, &x).unwrap(), reference);
        let mut store = ParamStore::new();
        let mut sp = spec(Strategy::FrozenAlignment);
        sp.alignment_layers = 0;
        let t = Tower::text(&sp, &base, &mut store, 5).unwrap();
        assert_eq!(t.embed(&store, &x).unwrap(), reference);
        let (t, s) = build(Strategy::Finetune, &base);
        assert_eq!(t.embed(&s, &x).unwrap(), reference);
    }

    #[test]
    fn trainable_counts_follow_strategy() {
        let base = BaseNetwork::<f64>::init(12, &[8, 8], 1, Stream::InitBase);
        for strategy in Strategy::ALL {
            let (t, s) = build(strategy, &base);
            assert_eq!(t.trainable_count(&s), spec(strategy).trainable_param_count(), "{strategy}");
        }
        // 12*8+8 + 8*8+8 = 176 base; adapters 2*(8*4+4 + 4*8+8) = 152; projection 8*8+8 + 8*4+4 = 108
        assert_eq!(spec(Strategy::Finetune).trainable_param_count(), 176 + 108);
        assert_eq!(spec(Strategy::Frozen).trainable_param_count(), 108);
        assert_eq!(spec(Strategy::FrozenBottleneck).trainable_param_count(), 152 + 108);
        assert_eq!(spec(Strategy::FrozenAlignment).trainable_param_count(), 6 * 72 + 108);
    }

    #[test]
    fn rejects_bad_shapes() {
        let base = BaseNetwork::<f64>::init(12, &[8, 8], 1, Stream::InitBase);
        let (t, s) = build(Strategy::Frozen, &base);
        assert!(matches!(t.embed(&s, &input(2, 11)), Err(DuoError::ShapeMismatch { .. })));
        let mut bad = spec(Strategy::FrozenBottleneck);
        bad.hidden_dims = vec![7, 7];
        assert!(bad.validate().is_err());
        let mut store = ParamStore::new();
        assert!(Tower::text(&TowerSpec::text(12, vec![8], 4, Strategy::Frozen), &base, &mut store, 0).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("lit".parse::<Strategy>().is_err());
    }
}
