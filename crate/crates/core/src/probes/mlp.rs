use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ProbeError, Tensors};
use crate::linalg::{pad_ones, softmax_rows};

/// ReLU network: `layers` hidden layers of width `hidden`, inverted dropout
/// after every hidden activation, then a linear output projection. Every
/// weight matrix carries its bias as a trailing column.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpProbe {
    pub hidden: Vec<Array2<f64>>,
    pub output: Array2<f64>,
    pub dropout: f64,
}

pub(crate) struct MlpCache {
    inputs: Vec<Array2<f64>>,
    active: Vec<Array2<f64>>,
}

impl MlpProbe {
    /// He-normal hidden weights and a zero output layer.
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, layers: usize, hidden: usize, dropout: f64, rng: &mut R) -> Self {
        let mut weights = Vec::with_capacity(layers);
        let mut width = in_dim;
        for _ in 0..layers {
            let normal = Normal::new(0.0, (2.0 / width as f64).sqrt()).unwrap();
            let mut w = Array2::from_shape_simple_fn((hidden, width + 1), || normal.sample(rng));
            w.column_mut(width).fill(0.0);
            weights.push(w);
            width = hidden;
        }
        MlpProbe { hidden: weights, output: Array2::zeros((out_dim, width + 1)), dropout }
    }

    /// Like [`MlpProbe::new`] but with a random output layer, for encoders
    /// whose outputs feed another learned map.
    pub fn encoder<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        layers: usize,
        hidden: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let mut mlp = Self::new(in_dim, out_dim, layers, hidden, dropout, rng);
        let width = mlp.output.ncols() - 1;
        let normal = Normal::new(0.0, (1.0 / width as f64).sqrt()).unwrap();
        mlp.output = Array2::from_shape_simple_fn((out_dim, width + 1), || normal.sample(rng));
        mlp.output.column_mut(width).fill(0.0);
        mlp
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.output).ncols() - 1
    }

    pub fn out_dim(&self) -> usize {
        self.output.nrows()
    }

    pub fn layers(&self) -> usize {
        self.hidden.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.first().map(|w| w.nrows()).unwrap_or(0)
    }

    /// Forward pass. Dropout is active only when `rng` is given.
    pub(crate) fn forward<R: Rng>(&self, x: ArrayView2<f64>, mut rng: Option<&mut R>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.hidden.len() + 1);
        let mut active = Vec::with_capacity(self.hidden.len());
        let mut a = x.to_owned();
        let keep = 1.0 - self.dropout;
        for w in &self.hidden {
            let ap = pad_ones(a.view());
            let z = ap.dot(&w.t());
            // `scale` holds the ReLU derivative times the dropout mask.
            let mut scale = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if let Some(r) = rng.as_deref_mut() {
                if self.dropout > 0.0 {
                    scale.mapv_inplace(|m| if r.random::<f64>() < keep { m / keep } else { 0.0 });
                }
            }
            a = &z * &scale;
            inputs.push(ap);
            active.push(scale);
        }
        let ap = pad_ones(a.view());
        let out = ap.dot(&self.output.t());
        inputs.push(ap);
        (out, MlpCache { inputs, active })
    }

    /// Parameter gradients (hidden layers, then output) and the input gradient.
    pub(crate) fn backward(&self, cache: &MlpCache, g: ArrayView2<f64>) -> (Tensors, Array2<f64>) {
        let n_hidden = self.hidden.len();
        let mut grads = vec![Array2::zeros((0, 0)); n_hidden + 1];
        grads[n_hidden] = g.t().dot(&cache.inputs[n_hidden]);
        let width = self.output.ncols() - 1;
        let mut da = g.dot(&self.output.slice(s![.., ..width]));
        for l in (0..n_hidden).rev() {
            let dz = &da * &cache.active[l];
            grads[l] = dz.t().dot(&cache.inputs[l]);
            let w = &self.hidden[l];
            da = dz.dot(&w.slice(s![.., ..w.ncols() - 1]));
        }
        (grads, da)
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.hidden.iter().chain(std::iter::once(&self.output)).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.hidden.iter_mut().chain(std::iter::once(&mut self.output)).collect()
    }
}

/// Distribution over labels for one representation. With `training` set and
/// an RNG supplied, dropout masks are drawn from `rng`.
pub fn mlp_forward<R: Rng>(
    probe: &MlpProbe,
    h: &[f64],
    training: bool,
    rng: Option<&mut R>,
) -> Result<Array1<f64>, ProbeError> {
    if h.len() != probe.in_dim() {
        return Err(ProbeError::Dimension { expected: probe.in_dim(), found: h.len() });
    }
    let x = ArrayView2::from_shape((1, h.len()), h).unwrap();
    let rng = if training { rng } else { None };
    let (mut logits, _) = probe.forward(x, rng);
    softmax_rows(&mut logits);
    Ok(logits.row(0).to_owned())
}
