use parabench_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    /// Never touched by an optimizer step.
    pub frozen: bool,
    /// Receives decoupled weight decay. Off for biases and the logit scale.
    pub decay: bool,
}

impl<T: Scalar> Param<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Flat list of named parameter tensors shared by the layers referencing them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, param: Param<T>) -> ParamId {
        self.params.push(param);
        ParamId(self.params.len() - 1)
    }

    /// Weight matrix `rows x cols` drawn from `U(-1/sqrt(cols), 1/sqrt(cols))`.
    pub fn push_weight(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut SeededRng) -> ParamId {
        let bound = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::lit(rng.uniform_in(-bound, bound))).collect();
        self.push(Param { name: name.into(), rows, cols, data, frozen: false, decay: true })
    }

    pub fn push_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize, decay: bool) -> ParamId {
        self.push(Param { name: name.into(), rows, cols, data: vec![T::zero(); rows * cols], frozen: false, decay })
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn data(&self, id: ParamId) -> &[T] {
        &self.params[id.0].data
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.params[id.0].frozen = frozen;
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| !p.frozen).map(Param::len).sum()
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    /// Zeroed gradient buffers matching every tensor.
    pub fn zero_grads(&self) -> Grads<T> {
        Grads { grads: self.params.iter().map(|p| vec![T::zero(); p.len()]).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    rows: p.rows,
                    cols: p.cols,
                    data: p.data.iter().map(|v| U::lit(v.to_f64().expect("finite"))).collect(),
                    frozen: p.frozen,
                    decay: p.decay,
                })
                .collect(),
        }
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    grads: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.grads.iter().map(Vec::as_slice)
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }
}
