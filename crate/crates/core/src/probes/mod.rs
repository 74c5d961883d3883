//! Probe families: linear (optionally rank-factorized), MLP, and the
//! context-free biaffine dependency parser.

mod biaffine;
mod io;
mod linear;
mod mlp;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use biaffine::{biaffine_forward, BiaffineParserProbe, Encoders};
pub use io::{decode_probe, encode_probe, PROBE_MAGIC};
pub use linear::{linear_forward, LinearMap, LinearProbe};
pub use mlp::{mlp_forward, MlpProbe};

use crate::corpus::TaskKind;
use crate::linalg::{argmax, logsumexp_rows, softmax_rows};

pub type Tensors = Vec<Array2<f64>>;

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("sentence must contain at least one token")]
    EmptySentence,
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("malformed probe blob at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Architecture {
    /// `rank: Some(r)` factorizes `W = W_lᵀ W_r` with inner dimension `r`.
    Linear {
        rank: Option<usize>,
    },
    Mlp {
        layers: usize,
        hidden: usize,
        dropout: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSpec {
    pub id: usize,
    pub arch: Architecture,
}

impl ProbeSpec {
    /// Instantiates the probe for a task. `in_dim` is the classifier input
    /// width (`d` for POSL, `2d` for DAL) or the token width `d` for parsing.
    pub fn build(&self, task: TaskKind, in_dim: usize, n_labels: usize, seed: u64) -> Result<Probe, ProbeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if in_dim == 0 {
            return Err(ProbeError::Architecture("input dimension must be positive".into()));
        }
        match (task, self.arch) {
            (TaskKind::Parse, Architecture::Linear { rank }) => {
                let k = in_dim + 1;
                let biaffine = match rank {
                    None => LinearMap::zeros(k, k),
                    Some(r) => {
                        check_rank(r)?;
                        LinearMap::factorized(k, k, r, &mut rng)
                    }
                };
                Ok(Probe::Biaffine(BiaffineParserProbe {
                    root: biaffine::new_root(in_dim, &mut rng),
                    encoders: Encoders::Identity,
                    biaffine,
                }))
            }
            (TaskKind::Parse, Architecture::Mlp { layers, hidden, dropout }) => {
                check_mlp(layers, hidden, dropout)?;
                let root = biaffine::new_root(in_dim, &mut rng);
                let head = MlpProbe::encoder(in_dim, hidden, layers, hidden, dropout, &mut rng);
                let tail = MlpProbe::encoder(in_dim, hidden, layers, hidden, dropout, &mut rng);
                Ok(Probe::Biaffine(BiaffineParserProbe {
                    root,
                    encoders: Encoders::Mlp { head, tail },
                    biaffine: LinearMap::zeros(hidden + 1, hidden + 1),
                }))
            }
            (_, Architecture::Linear { rank }) => {
                if n_labels == 0 {
                    return Err(ProbeError::Architecture("empty label set".into()));
                }
                let map = match rank {
                    None => LinearMap::zeros(n_labels, in_dim + 1),
                    Some(r) => {
                        check_rank(r)?;
                        LinearMap::factorized(n_labels, in_dim + 1, r, &mut rng)
                    }
                };
                Ok(Probe::Linear(LinearProbe::new(map)))
            }
            (_, Architecture::Mlp { layers, hidden, dropout }) => {
                if n_labels == 0 {
                    return Err(ProbeError::Architecture("empty label set".into()));
                }
                check_mlp(layers, hidden, dropout)?;
                Ok(Probe::Mlp(MlpProbe::new(in_dim, n_labels, layers, hidden, dropout, &mut rng)))
            }
        }
    }
}

fn check_rank(r: usize) -> Result<(), ProbeError> {
    if r == 0 {
        return Err(ProbeError::Architecture("rank cap must be at least 1".into()));
    }
    Ok(())
}

fn check_mlp(layers: usize, hidden: usize, dropout: f64) -> Result<(), ProbeError> {
    if layers > 5 {
        return Err(ProbeError::Architecture(format!("{layers} hidden layers (max 5)")));
    }
    if hidden == 0 {
        return Err(ProbeError::Architecture("hidden size must be positive".into()));
    }
    if !(0.0..=0.5).contains(&dropout) {
        return Err(ProbeError::Architecture(format!("dropout {dropout} outside [0, 0.5]")));
    }
    Ok(())
}

#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    Linear(LinearProbe),
    Mlp(MlpProbe),
    Biaffine(BiaffineParserProbe),
}

/// Loss and gradients for one batch (or one sentence).
#[derive(Clone, Debug)]
pub struct Gradient {
    /// Summed cross-entropy.
    pub loss: f64,
    pub params: Tensors,
    /// Gradient with respect to the input rows.
    pub input: Array2<f64>,
    pub correct: usize,
    pub total: usize,
}

impl Probe {
    pub fn params(&self) -> Vec<&Array2<f64>> {
        match self {
            Probe::Linear(p) => p.map.params(),
            Probe::Mlp(p) => p.params(),
            Probe::Biaffine(p) => p.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            Probe::Linear(p) => p.map.params_mut(),
            Probe::Mlp(p) => p.params_mut(),
            Probe::Biaffine(p) => p.params_mut(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Whether the nuclear-norm penalty is defined: linear classifiers and
    /// the bilinear parser.
    pub fn is_linear_family(&self) -> bool {
        match self {
            Probe::Linear(_) => true,
            Probe::Mlp(_) => false,
            Probe::Biaffine(p) => p.is_linear(),
        }
    }

    /// The linear map carrying the complexity penalty, if any.
    pub fn penalized_map(&self) -> Option<&LinearMap> {
        match self {
            Probe::Linear(p) => Some(&p.map),
            Probe::Biaffine(p) if p.is_linear() => Some(&p.biaffine),
            _ => None,
        }
    }

    pub fn penalized_map_mut(&mut self) -> Option<&mut LinearMap> {
        match self {
            Probe::Linear(p) => Some(&mut p.map),
            Probe::Biaffine(p) if p.is_linear() => Some(&mut p.biaffine),
            _ => None,
        }
    }

    /// Offset of the penalized map's tensors within [`Probe::params`].
    pub fn penalized_offset(&self) -> usize {
        match self {
            Probe::Biaffine(_) => 1,
            _ => 0,
        }
    }

    pub fn effective_matrix(&self) -> Option<Array2<f64>> {
        self.penalized_map().map(LinearMap::effective)
    }

    pub fn is_parser(&self) -> bool {
        matches!(self, Probe::Biaffine(_))
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Probe::Linear(p) => p.in_dim(),
            Probe::Mlp(p) => p.in_dim(),
            Probe::Biaffine(p) => p.in_dim(),
        }
    }

    /// Classifier logits in evaluation mode.
    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Probe::Linear(p) => p.logits(x),
            Probe::Mlp(p) => p.forward::<ChaCha8Rng>(x, None).0,
            Probe::Biaffine(_) => panic!("parser probes score sentences, not rows"),
        }
    }

    /// Head scores (`n × (n + 1)`) in evaluation mode.
    pub fn head_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Probe::Biaffine(p) => p.scores(x, None).0,
            _ => panic!("classifier probes do not score heads"),
        }
    }

    /// Predicted labels (classifiers) for a batch.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.logits(x).rows().into_iter().map(argmax).collect()
    }

    /// Greedy head prediction (1-based, 0 = root) per token.
    pub fn predict_heads(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.head_scores(x).rows().into_iter().map(argmax).collect()
    }

    /// Cross-entropy gradient for a classifier batch; dropout active iff `rng` is given.
    pub fn classify_grad(&self, x: ArrayView2<f64>, targets: &[usize], rng: Option<&mut ChaCha8Rng>) -> Gradient {
        let (logits, cache) = match self {
            Probe::Linear(p) => (p.logits(x), None),
            Probe::Mlp(p) => {
                let (l, c) = p.forward(x, rng);
                (l, Some(c))
            }
            Probe::Biaffine(_) => panic!("use parse_grad for parser probes"),
        };
        let (loss, g, correct) = cross_entropy(logits, targets);
        let (params, input) = match self {
            Probe::Linear(p) => p.backward(x, g.view()),
            Probe::Mlp(p) => p.backward(cache.as_ref().unwrap(), g.view()),
            Probe::Biaffine(_) => unreachable!(),
        };
        Gradient { loss, params, input, correct, total: targets.len() }
    }

    /// Cross-entropy gradient for one sentence with gold `heads`.
    pub fn parse_grad(&self, x: ArrayView2<f64>, heads: &[usize], rng: Option<&mut ChaCha8Rng>) -> Gradient {
        let Probe::Biaffine(p) = self else { panic!("use classify_grad for classifier probes") };
        let (scores, cache) = p.scores(x, rng);
        let (loss, g, correct) = cross_entropy(scores, heads);
        let (params, input) = p.backward(&cache, g.view());
        Gradient { loss, params, input, correct, total: heads.len() }
    }
}

/// Summed softmax cross-entropy over rows, its gradient with respect to the
/// logits, and the number of argmax hits.
pub fn cross_entropy(logits: Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>, usize) {
    assert_eq!(logits.nrows(), targets.len());
    let lse = logsumexp_rows(&logits);
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, &t) in targets.iter().enumerate() {
        loss += lse[i] - logits[[i, t]];
        if argmax(logits.row(i)) == t {
            correct += 1;
        }
    }
    let mut g = logits;
    softmax_rows(&mut g);
    for (i, &t) in targets.iter().enumerate() {
        g[[i, t]] -= 1.0;
    }
    (loss, g, correct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = LinearProbe::new(LinearMap::zeros(4, 4));
        let out = linear_forward(&p, &[0.3, -2.0, 7.0]).unwrap();
        close(out.as_slice().unwrap(), &[0.25; 4], 1e-15);
    }

    #[test]
    fn identity_weights_closed_form() {
        // W = I (bias column zero), h = [1, 0].
        let p = LinearProbe::new(LinearMap::Full(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]));
        let out = linear_forward(&p, &[1.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        close(out.as_slice().unwrap(), &[e / (e + 1.0), 1.0 / (e + 1.0)], 1e-15);
        assert!((out[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch() {
        let p = LinearProbe::new(LinearMap::zeros(3, 5));
        assert_eq!(linear_forward(&p, &[1.0]).unwrap_err(), ProbeError::Dimension { expected: 4, found: 1 });
    }

    #[test]
    fn zero_layer_mlp_equals_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mlp = MlpProbe::new(3, 4, 0, 8, 0.3, &mut rng);
        mlp.output = Array2::from_shape_fn((4, 4), |(i, j)| (i as f64 - j as f64) * 0.37);
        let lin = LinearProbe::new(LinearMap::Full(mlp.output.clone()));
        let h = [0.5, -1.0, 2.0];
        let a = mlp_forward(&mlp, &h, true, Some(&mut rng)).unwrap();
        let b = linear_forward(&lin, &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = MlpProbe::new(3, 4, 2, 16, 0.5, &mut rng);
        mlp.output.mapv_inplace(|_| 0.1);
        mlp.output[[0, 0]] = 1.0;
        let h = [0.5, -1.0, 2.0];
        let a = mlp_forward(&mlp, &h, false, Some(&mut rng)).unwrap();
        let b = mlp_forward(&mlp, &h, false, Some(&mut rng)).unwrap();
        assert_eq!(a, b);
        assert!((a.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_token_sentence_attaches_to_root() {
        let spec = ProbeSpec { id: 0, arch: Architecture::Mlp { layers: 1, hidden: 4, dropout: 0.0 } };
        let Probe::Biaffine(p) = spec.build(TaskKind::Parse, 3, 0, 5).unwrap() else { unreachable!() };
        let probs = biaffine_forward(&p, array![[1.0, 2.0, 3.0]].view()).unwrap();
        assert_eq!(probs, array![[1.0, 0.0]]);
    }

    #[test]
    fn parser_rejects_bad_inputs() {
        let spec = ProbeSpec { id: 0, arch: Architecture::Linear { rank: None } };
        let Probe::Biaffine(p) = spec.build(TaskKind::Parse, 3, 0, 5).unwrap() else { unreachable!() };
        assert_eq!(biaffine_forward(&p, Array2::zeros((0, 3)).view()).unwrap_err(), ProbeError::EmptySentence);
        assert!(matches!(
            biaffine_forward(&p, Array2::zeros((2, 4)).view()),
            Err(ProbeError::Dimension { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn cross_entropy_of_uniform_predictions() {
        let (loss, _, _) = cross_entropy(Array2::zeros((3, 4)), &[0, 1, 3]);
        assert!((loss - 3.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_architectures() {
        let bad = [
            Architecture::Mlp { layers: 6, hidden: 8, dropout: 0.1 },
            Architecture::Mlp { layers: 1, hidden: 0, dropout: 0.1 },
            Architecture::Mlp { layers: 1, hidden: 8, dropout: 0.7 },
            Architecture::Linear { rank: Some(0) },
        ];
        for arch in bad {
            assert!(ProbeSpec { id: 0, arch }.build(TaskKind::Posl, 4, 3, 0).is_err());
        }
    }

    #[test]
    fn factorized_effective_matrix() {
        let map = LinearMap::Factorized { left: array![[1.0, 2.0]], right: array![[3.0, 4.0, 5.0]] };
        assert_eq!(map.effective(), array![[3.0, 4.0, 5.0], [6.0, 8.0, 10.0]]);
        let x = array![[1.0, 0.0, 1.0]];
        assert_eq!(map.apply(x.view()), x.dot(&map.effective().t()));
    }
}
