use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ProbeError, Tensors};
use crate::linalg::{pad_ones, softmax_rows};

/// A weight matrix `W` (`out × in`), stored either directly or as the
/// rank-capped product `W = leftᵀ right` with `left: r × out`, `right: r × in`.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearMap {
    Full(Array2<f64>),
    Factorized { left: Array2<f64>, right: Array2<f64> },
}

impl LinearMap {
    /// Zero-initialized full map.
    pub fn zeros(out: usize, inp: usize) -> Self {
        LinearMap::Full(Array2::zeros((out, inp)))
    }

    /// Factorized map with `left = 0` and `right ~ N(0, 1/in)`.
    pub fn factorized<R: Rng>(out: usize, inp: usize, rank: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / inp as f64).sqrt()).unwrap();
        LinearMap::Factorized {
            left: Array2::zeros((rank, out)),
            right: Array2::from_shape_simple_fn((rank, inp), || normal.sample(rng)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            LinearMap::Full(w) => w.dim(),
            LinearMap::Factorized { left, right } => (left.ncols(), right.ncols()),
        }
    }

    pub fn rank_cap(&self) -> Option<usize> {
        match self {
            LinearMap::Full(_) => None,
            LinearMap::Factorized { left, .. } => Some(left.nrows()),
        }
    }

    pub fn effective(&self) -> Array2<f64> {
        match self {
            LinearMap::Full(w) => w.clone(),
            LinearMap::Factorized { left, right } => left.t().dot(right),
        }
    }

    /// `x · Wᵀ` for a batch of (already padded) rows.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            LinearMap::Full(w) => x.dot(&w.t()),
            LinearMap::Factorized { left, right } => x.dot(&right.t()).dot(left),
        }
    }

    /// Gradients of the parameters and of `x`, given `g = ∂L/∂(x·Wᵀ)`.
    pub fn backward(&self, x: ArrayView2<f64>, g: ArrayView2<f64>) -> (Tensors, Array2<f64>) {
        match self {
            LinearMap::Full(w) => (vec![g.t().dot(&x)], g.dot(w)),
            LinearMap::Factorized { left, right } => {
                let t = x.dot(&right.t());
                let d_left = t.t().dot(&g);
                let d_t = g.dot(&left.t());
                let d_right = d_t.t().dot(&x);
                (vec![d_left, d_right], d_t.dot(right))
            }
        }
    }

    /// Maps a gradient with respect to the effective `W` onto the parameters.
    pub fn pull_back(&self, g: &Array2<f64>) -> Tensors {
        match self {
            LinearMap::Full(_) => vec![g.clone()],
            LinearMap::Factorized { left, right } => vec![right.dot(&g.t()), left.dot(g)],
        }
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        match self {
            LinearMap::Full(w) => vec![w],
            LinearMap::Factorized { left, right } => vec![left, right],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            LinearMap::Full(w) => vec![w],
            LinearMap::Factorized { left, right } => vec![left, right],
        }
    }
}

/// `p(t | h) = softmax(W [h; 1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub map: LinearMap,
}

impl LinearProbe {
    pub fn new(map: LinearMap) -> Self {
        LinearProbe { map }
    }

    /// Input width without the bias pad.
    pub fn in_dim(&self) -> usize {
        self.map.shape().1 - 1
    }

    pub fn n_labels(&self) -> usize {
        self.map.shape().0
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.map.apply(pad_ones(x).view())
    }

    pub(crate) fn backward(&self, x: ArrayView2<f64>, g: ArrayView2<f64>) -> (Tensors, Array2<f64>) {
        let xp = pad_ones(x);
        let (grads, dxp) = self.map.backward(xp.view(), g);
        let d = x.ncols();
        (grads, dxp.slice_move(ndarray::s![.., ..d]))
    }
}

/// Distribution over labels for a single representation `h`.
pub fn linear_forward(probe: &LinearProbe, h: &[f64]) -> Result<Array1<f64>, ProbeError> {
    if h.len() != probe.in_dim() {
        return Err(ProbeError::Dimension { expected: probe.in_dim(), found: h.len() });
    }
    let x = ArrayView2::from_shape((1, h.len()), h).unwrap();
    let mut logits = probe.logits(x);
    softmax_rows(&mut logits);
    Ok(logits.row(0).to_owned())
}
