use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
}

/// Owns every trainable matrix of a model. Graphs borrow it read-only;
/// optimizers mutate it between steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    /// Glorot-uniform initialization.
    pub fn add_xavier<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let scale = (6.0 / (rows + cols) as f64).sqrt();
        self.add_uniform(name, rows, cols, scale, rng)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Matrix::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Addresses a scalar by its position in the flattened parameter vector.
    pub fn locate(&self, mut flat: usize) -> Option<(ParamId, usize)> {
        for (i, p) in self.params.iter().enumerate() {
            if flat < p.value.len() {
                return Some((ParamId(i), flat));
            }
            flat -= p.value.len();
        }
        None
    }

    /// Same parameter names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Grads {
    grads: Vec<Matrix>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            grads: store
                .params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Matrix::sq_norm).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, f: f64) {
        for g in &mut self.grads {
            g.scale_assign(f);
        }
    }

    /// Rescales so the global norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}
