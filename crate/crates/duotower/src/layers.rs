//! Dense layers, bottleneck adapters and their hand-written backward passes.

use parabench_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::params::{Grads, ParamId, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::Matrix;

/// GELU, tanh form. Odd part is exactly linear: `gelu(x) - gelu(-x) = x`.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let (c, a, half) = (T::lit(0.797_884_560_802_865_4), T::lit(0.044_715), T::lit(0.5));
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, a, half) = (T::lit(0.797_884_560_802_865_4), T::lit(0.044_715), T::lit(0.5));
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
}

/// `y = x Wᵀ + b` with `W: out x in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let weight = store.push_weight(format!("{name}.weight"), output, input, rng);
        let bias = store.push_zeros(format!("{name}.bias"), 1, output, false);
        Self { weight, bias, input, output }
    }

    pub fn init_zero<T: Scalar>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize) -> Self {
        let weight = store.push_zeros(format!("{name}.weight"), output, input, true);
        let bias = store.push_zeros(format!("{name}.bias"), 1, output, false);
        Self { weight, bias, input, output }
    }

    pub fn param_count(&self) -> usize {
        self.input * self.output + self.output
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Matrix<T>) -> Matrix<T> {
        let mut y = x.matmul_t(store.data(self.weight), self.output);
        y.add_row_vector(store.data(self.bias));
        y
    }

    /// Accumulates parameter gradients; returns `dL/dx` when asked.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        grads: &mut Grads<T>,
        x: &Matrix<T>,
        dy: &Matrix<T>,
        need_dx: bool,
    ) -> Option<Matrix<T>> {
        dy.add_tmatmul_into(x, grads.get_mut(self.weight));
        dy.add_col_sums_into(grads.get_mut(self.bias));
        need_dx.then(|| dy.matmul(store.data(self.weight), self.input))
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// One stage of a tower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// `gelu(x Wᵀ + b)`.
    DenseGelu(Dense),
    /// Residual bottleneck, `x + up(gelu(down(x)))`.
    Adapter { down: Dense, up: Dense },
    /// `x Wᵀ + b`.
    Linear(Dense),
    /// `x + gelu(x Wᵀ + b)`, square `W`.
    ResidualGelu(Dense),
}

#[derive(Debug, Clone)]
pub enum BlockCache<T> {
    DenseGelu { input: Matrix<T>, pre: Matrix<T> },
    Adapter { input: Matrix<T>, pre: Matrix<T>, hidden: Matrix<T> },
    Linear { input: Matrix<T> },
}

impl Block {
    pub fn output_dim(&self) -> usize {
        match self {
            Block::DenseGelu(d) | Block::Linear(d) | Block::ResidualGelu(d) => d.output,
            Block::Adapter { up, .. } => up.output,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Block::DenseGelu(d) | Block::Linear(d) | Block::ResidualGelu(d) => d.ids().to_vec(),
            Block::Adapter { down, up } => [down.ids(), up.ids()].concat(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Block::DenseGelu(d) | Block::Linear(d) | Block::ResidualGelu(d) => d.param_count(),
            Block::Adapter { down, up } => down.param_count() + up.param_count(),
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: Matrix<T>) -> (Matrix<T>, BlockCache<T>) {
        match self {
            Block::DenseGelu(d) => {
                let pre = d.forward(store, &x);
                let y = pre.map(gelu);
                (y, BlockCache::DenseGelu { input: x, pre })
            }
            Block::Adapter { down, up } => {
                let pre = down.forward(store, &x);
                let hidden = pre.map(gelu);
                let mut y = up.forward(store, &hidden);
                y.add_assign(&x);
                (y, BlockCache::Adapter { input: x, pre, hidden })
            }
            Block::Linear(d) => (d.forward(store, &x), BlockCache::Linear { input: x }),
            Block::ResidualGelu(d) => {
                let pre = d.forward(store, &x);
                let mut y = pre.map(gelu);
                y.add_assign(&x);
                (y, BlockCache::DenseGelu { input: x, pre })
            }
        }
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        grads: &mut Grads<T>,
        cache: &BlockCache<T>,
        dy: &Matrix<T>,
        need_dx: bool,
    ) -> Option<Matrix<T>> {
        match (self, cache) {
            (Block::DenseGelu(d), BlockCache::DenseGelu { input, pre }) => {
                let mut dz = dy.clone();
                for (g, &z) in dz.data.iter_mut().zip(&pre.data) {
                    *g = *g * gelu_grad(z);
                }
                d.backward(store, grads, input, &dz, need_dx)
            }
            (Block::Adapter { down, up }, BlockCache::Adapter { input, pre, hidden }) => {
                let mut dh = up.backward(store, grads, hidden, dy, true).expect("dx requested");
                for (g, &z) in dh.data.iter_mut().zip(&pre.data) {
                    *g = *g * gelu_grad(z);
                }
                let dx_branch = down.backward(store, grads, input, &dh, need_dx);
                dx_branch.map(|mut dx| {
                    dx.add_assign(dy);
                    dx
                })
            }
            (Block::Linear(d), BlockCache::Linear { input }) => d.backward(store, grads, input, dy, need_dx),
            (Block::ResidualGelu(d), BlockCache::DenseGelu { input, pre }) => {
                let mut dz = dy.clone();
                for (g, &z) in dz.data.iter_mut().zip(&pre.data) {
                    *g = *g * gelu_grad(z);
                }
                d.backward(store, grads, input, &dz, need_dx).map(|mut dx| {
                    dx.add_assign(dy);
                    dx
                })
            }
            _ => unreachable!("cache does not match block"),
        }
    }
}
