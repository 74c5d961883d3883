use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linear::LinearMap;
use super::mlp::{MlpCache, MlpProbe};
use super::{ProbeError, Tensors};
use crate::linalg::{pad_ones, softmax_rows};

#[derive(Clone, Debug, PartialEq)]
pub enum Encoders {
    /// Tokens enter the biaffine map unchanged: a bilinear (linear-family) parser.
    Identity,
    /// Separate head and tail MLPs with identical shapes.
    Mlp { head: MlpProbe, tail: MlpProbe },
}

/// Context-free biaffine head selector.
///
/// For tokens `1..=n` and the artificial root `0`, the score of head `i`
/// for tail `j` is `[e_head(i); 1]ᵀ W [e_tail(j); 1]`; candidates are
/// normalized per tail with self-attachment masked out.
#[derive(Clone, Debug, PartialEq)]
pub struct BiaffineParserProbe {
    pub encoders: Encoders,
    pub biaffine: LinearMap,
    /// Learnable root representation, `1 × d`.
    pub root: Array2<f64>,
}

pub(crate) struct ParseCache {
    heads_in: Array2<f64>,
    head_cache: Option<MlpCache>,
    tail_cache: Option<MlpCache>,
    eh: Array2<f64>,
    et: Array2<f64>,
    a: Array2<f64>,
}

impl BiaffineParserProbe {
    pub fn in_dim(&self) -> usize {
        self.root.ncols()
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.encoders, Encoders::Identity)
    }

    /// Masked head scores, `n × (n + 1)`: row `j` scores every candidate head
    /// of token `j + 1`, column 0 being the root.
    pub(crate) fn scores(&self, x: ArrayView2<f64>, mut rng: Option<&mut ChaCha8Rng>) -> (Array2<f64>, ParseCache) {
        let n = x.nrows();
        let heads_in = concatenate(Axis(0), &[self.root.view(), x]).unwrap();
        let (eh, et, head_cache, tail_cache) = match &self.encoders {
            Encoders::Identity => (pad_ones(heads_in.view()), pad_ones(x), None, None),
            Encoders::Mlp { head, tail } => {
                let (h, hc) = head.forward(heads_in.view(), rng.as_deref_mut());
                let (t, tc) = tail.forward(x, rng);
                (pad_ones(h.view()), pad_ones(t.view()), Some(hc), Some(tc))
            }
        };
        let w = self.biaffine.effective();
        let a = eh.dot(&w);
        let mut scores = et.dot(&a.t());
        for j in 0..n {
            scores[[j, j + 1]] = f64::NEG_INFINITY;
        }
        (scores, ParseCache { heads_in, head_cache, tail_cache, eh, et, a })
    }

    /// Parameter gradients (root, biaffine, head MLP, tail MLP) and the
    /// gradient with respect to the token representations.
    pub(crate) fn backward(&self, cache: &ParseCache, g: ArrayView2<f64>) -> (Tensors, Array2<f64>) {
        let c = g.t().dot(&cache.et);
        let d_w = cache.eh.t().dot(&c);
        let w = self.biaffine.effective();
        let d_eh = c.dot(&w.t());
        let d_et = g.dot(&cache.a);
        let k = cache.eh.ncols() - 1;
        let d_eh = d_eh.slice(s![.., ..k]);
        let d_et = d_et.slice(s![.., ..k]);

        let mut grads = Vec::new();
        let (d_heads_in, d_tail_x) = match &self.encoders {
            Encoders::Identity => (d_eh.to_owned(), d_et.to_owned()),
            Encoders::Mlp { head, tail } => {
                let (gh, dh) = head.backward(cache.head_cache.as_ref().unwrap(), d_eh);
                let (gt, dt) = tail.backward(cache.tail_cache.as_ref().unwrap(), d_et);
                grads.extend(gh);
                grads.extend(gt);
                (dh, dt)
            }
        };
        let mut out = vec![d_heads_in.slice(s![0..1, ..]).to_owned()];
        out.extend(self.biaffine.pull_back(&d_w));
        out.extend(grads);
        let dx = &d_heads_in.slice(s![1.., ..]) + &d_tail_x;
        debug_assert_eq!(cache.heads_in.nrows(), dx.nrows() + 1);
        (out, dx)
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = vec![&self.root];
        p.extend(self.biaffine.params());
        if let Encoders::Mlp { head, tail } = &self.encoders {
            p.extend(head.params());
            p.extend(tail.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = vec![&mut self.root];
        p.extend(self.biaffine.params_mut());
        if let Encoders::Mlp { head, tail } = &mut self.encoders {
            p.extend(head.params_mut());
            p.extend(tail.params_mut());
        }
        p
    }
}

/// Per-token distributions over candidate heads `{0 (root), 1, …, n}`,
/// returned as an `n × (n + 1)` matrix.
pub fn biaffine_forward(probe: &BiaffineParserProbe, reps: ArrayView2<f64>) -> Result<Array2<f64>, ProbeError> {
    if reps.nrows() == 0 {
        return Err(ProbeError::EmptySentence);
    }
    if reps.ncols() != probe.in_dim() {
        return Err(ProbeError::Dimension { expected: probe.in_dim(), found: reps.ncols() });
    }
    let (mut scores, _) = probe.scores(reps, None);
    softmax_rows(&mut scores);
    Ok(scores)
}

pub(crate) fn new_root<R: Rng>(d: usize, rng: &mut R) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_simple_fn((1, d), || StandardNormal.sample(rng))
}
