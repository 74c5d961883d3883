//! Probe optimization and hyperparameter sweeps.

mod optim;
mod sweep;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::{Adam, RowAdam};
pub use sweep::{rank_limit, sample_sweep, SweepSpec};

use crate::corpus::{InputRef, Target, TaskDataset, TaskKind};
use crate::linalg::{self, SvdError};
use crate::probes::{Probe, ProbeError, ProbeSpec};
use crate::representations::{EmbeddingError, FeatureView, RepresentationProvider};

const ORDER_STREAM: u64 = 3;
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite loss at step {step} (gradient norm {grad_norm})")]
    NonFinite { step: usize, grad_norm: f64 },
    #[error("empty dataset or batch")]
    Empty,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Svd(#[from] SvdError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LinearNuclear,
    LinearRank,
    Mlp,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::LinearNuclear => "linear-nuclear",
            Family::LinearRank => "linear-rank",
            Family::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear-nuclear" => Ok(Family::LinearNuclear),
            "linear-rank" => Ok(Family::LinearRank),
            "mlp" => Ok(Family::Mlp),
            _ => Err(format!("unknown probe family `{s}` (expected linear-nuclear, linear-rank or mlp)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Real,
    LabelShuffled,
    FullyShuffled,
}

/// How the nuclear-norm term enters each update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuclearUpdate {
    /// Adds `λ U Vᵀ` to the gradient.
    Subgradient,
    /// Soft-thresholds singular values by `lr · λ` after each step.
    Proximal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stopping patience on dev accuracy (real objective).
    pub patience: usize,
    /// Patience on train accuracy for the shuffled objectives.
    pub shuffled_patience: usize,
    pub seed: u64,
    pub lambda: f64,
    pub objective: Objective,
    pub nuclear_update: NuclearUpdate,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            shuffled_patience: 10,
            seed: 0,
            lambda: 0.0,
            objective: Objective::Real,
            nuclear_update: NuclearUpdate::Subgradient,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.lambda.is_nan() || self.lambda < 0.0 || !self.lambda.is_finite() {
            return bad("lambda must be a finite value >= 0");
        }
        if self.patience < 1 || self.shuffled_patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be positive");
        }
        Ok(())
    }
}

/// A dataset paired with the provider that embeds its tokens.
#[derive(Clone, Copy)]
pub struct SplitData<'a> {
    pub dataset: &'a TaskDataset,
    pub provider: &'a RepresentationProvider,
}

impl<'a> SplitData<'a> {
    pub fn new(dataset: &'a TaskDataset, provider: &'a RepresentationProvider) -> Self {
        SplitData { dataset, provider }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedProbe {
    pub spec: ProbeSpec,
    pub task: TaskKind,
    pub probe: Probe,
    /// Learned embedding table for one-hot representations.
    pub table: Option<Array2<f64>>,
    pub train_accuracy: f64,
    pub dev_accuracy: Option<f64>,
    pub nuclear_norm: Option<f64>,
    pub rank_bound: Option<usize>,
    pub epochs: usize,
    pub steps: usize,
}

impl TrainedProbe {
    /// Accuracy (POSL/DAL) or UAS (parsing) on a split. One-hot splits read
    /// the learned table, so they must share the training provider's vocabulary.
    pub fn evaluate(&self, split: SplitData) -> Result<f64, TrainError> {
        let view = FeatureView::new(split.provider, &split.dataset.treebank)?;
        let table = if split.provider.trainable() { self.table.as_ref() } else { None };
        Ok(evaluate(&self.probe, table, &view, split.dataset))
    }
}

/// Input width a probe sees for this task under a `d`-wide provider.
pub fn probe_input_dim(task: TaskKind, d: usize) -> usize {
    match task {
        TaskKind::Dal => 2 * d,
        _ => d,
    }
}

/// A batch for [`regularized_loss`].
pub enum Batch<'a> {
    Rows { inputs: ArrayView2<'a, f64>, targets: &'a [usize] },
    Sentences(&'a [(Array2<f64>, Vec<usize>)]),
}

/// Summed cross-entropy of the batch plus `λ‖W‖_*`. The penalty is only
/// defined for the linear family.
pub fn regularized_loss(probe: &Probe, batch: Batch, lambda: f64) -> Result<f64, TrainError> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(TrainError::Config("lambda must be >= 0".into()));
    }
    if lambda > 0.0 && !probe.is_linear_family() {
        return Err(TrainError::Config("nuclear-norm penalty requires a linear probe".into()));
    }
    let ce = match batch {
        Batch::Rows { inputs, targets } => {
            if targets.is_empty() {
                return Err(TrainError::Empty);
            }
            crate::probes::cross_entropy(probe.logits(inputs), targets).0
        }
        Batch::Sentences(sents) => {
            if sents.is_empty() {
                return Err(TrainError::Empty);
            }
            sents.iter().map(|(x, heads)| crate::probes::cross_entropy(probe.head_scores(x.view()), heads).0).sum()
        }
    };
    let penalty = match probe.effective_matrix() {
        Some(w) if lambda > 0.0 => lambda * crate::complexity::nuclear_norm(w.view())?,
        _ => 0.0,
    };
    Ok(ce + penalty)
}

struct Snapshot {
    probe: Probe,
    table: Option<Array2<f64>>,
}

/// Trains a probe by mini-batch Adam on `Σ CE + λ‖W‖_*`.
///
/// With the real objective, the parameters with the best dev accuracy (train
/// accuracy when `dev` is absent) are kept, stopping after `patience` epochs
/// without improvement. Shuffled objectives monitor train accuracy with
/// `shuffled_patience`, and the reported score is train accuracy.
pub fn train_probe(
    spec: &ProbeSpec,
    train: SplitData,
    dev: Option<SplitData>,
    config: &TrainConfig,
) -> Result<TrainedProbe, TrainError> {
    config.validate()?;
    let data = train.dataset;
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    let task = data.task;
    let in_dim = probe_input_dim(task, train.provider.dim());
    let mut probe = spec.build(task, in_dim, data.num_labels(), config.seed)?;
    if config.lambda > 0.0 && !probe.is_linear_family() {
        return Err(TrainError::Config(format!(
            "lambda = {} requires a linear probe; {:?} is not linear",
            config.lambda, spec.arch
        )));
    }
    if config.lambda > 0.0
        && config.nuclear_update == NuclearUpdate::Proximal
        && probe.penalized_map().and_then(|m| m.rank_cap()).is_some()
    {
        return Err(TrainError::Config("proximal updates need an unfactorized weight matrix".into()));
    }

    let view = FeatureView::new(train.provider, &data.treebank)?;
    let dev_view = match dev {
        Some(d) => Some((FeatureView::new(d.provider, &d.dataset.treebank)?, d)),
        None => None,
    };
    let mut table = train.provider.table().filter(|_| train.provider.trainable()).cloned();

    let targets: Vec<usize> = match task {
        TaskKind::Parse => Vec::new(),
        _ => data
            .label_targets()
            .into_iter()
            .map(|t| t.ok_or_else(|| TrainError::Config("training target outside the label set".into())))
            .collect::<Result<_, _>>()?,
    };

    let shapes: Vec<_> = probe.params().iter().map(|p| p.dim()).collect();
    let mut adam = Adam::new(config.learning_rate, &shapes);
    let mut row_adam = table.as_ref().map(|t| RowAdam::new(config.learning_rate, t.dim()));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(ORDER_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let (patience, use_dev) = match config.objective {
        Objective::Real => (config.patience, dev_view.is_some()),
        _ => (config.shuffled_patience, false),
    };
    let mut best_score = f64::NEG_INFINITY;
    let mut best: Option<Snapshot> = None;
    let mut since_best = 0;
    let mut step = 0;
    let mut epochs = 0;

    for _epoch in 0..config.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let mut grad = match task {
                TaskKind::Parse => {
                    let mut total: Option<crate::probes::Gradient> = None;
                    for &i in chunk {
                        let (sent, heads) = sentence_of(data, i);
                        let x = view.sentence(table.as_ref(), sent, heads.len());
                        let g = probe.parse_grad(x.view(), heads, Some(&mut rng));
                        if let Some(ra) = row_adam.as_mut() {
                            for tok in 0..heads.len() {
                                if let Some(row) = view.vocab_row(sent, tok) {
                                    ra.accumulate(row, g.input.row(tok));
                                }
                            }
                        }
                        total = Some(match total {
                            None => g,
                            Some(mut acc) => {
                                acc.loss += g.loss;
                                for (a, b) in acc.params.iter_mut().zip(&g.params) {
                                    *a += b;
                                }
                                acc
                            }
                        });
                    }
                    total.expect("non-empty chunk")
                }
                _ => {
                    let x = view.gather(table.as_ref(), data, chunk);
                    let t: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
                    let g = probe.classify_grad(x.view(), &t, Some(&mut rng));
                    if let Some(ra) = row_adam.as_mut() {
                        scatter_rows(ra, &view, data, chunk, &g.input);
                    }
                    g
                }
            };

            let mut loss = grad.loss;
            if config.lambda > 0.0 && config.nuclear_update == NuclearUpdate::Subgradient {
                let map = probe.penalized_map().expect("linear family");
                let w = map.effective();
                let d = linalg::svd(w.view())?;
                loss += config.lambda * d.sigma.sum();
                let sub = linalg::nuclear_subgradient(w.view())? * config.lambda;
                let offset = probe.penalized_offset();
                for (k, g) in map.pull_back(&sub).into_iter().enumerate() {
                    grad.params[offset + k] += &g;
                }
            }

            let mut sq: f64 = grad.params.iter().flat_map(|g| g.iter()).map(|x| x * x).sum();
            if let Some(ra) = row_adam.as_ref() {
                sq += ra.grad_sq_norm();
            }
            if !loss.is_finite() || !sq.is_finite() {
                return Err(TrainError::NonFinite { step, grad_norm: sq.sqrt() });
            }

            adam.step(probe.params_mut(), &grad.params);
            if let (Some(ra), Some(t)) = (row_adam.as_mut(), table.as_mut()) {
                ra.step(t);
            }
            if config.lambda > 0.0 && config.nuclear_update == NuclearUpdate::Proximal {
                if let Some(crate::probes::LinearMap::Full(w)) = probe.penalized_map_mut() {
                    *w = linalg::shrink_singular_values(w.view(), config.learning_rate * config.lambda)?;
                }
            }
        }

        let score = match (&dev_view, use_dev) {
            (Some((dv, d)), true) => evaluate(&probe, dev_table(&table, d.provider), dv, d.dataset),
            _ => evaluate(&probe, table.as_ref(), &view, data),
        };
        if score > best_score {
            best_score = score;
            best = Some(Snapshot { probe: probe.clone(), table: table.clone() });
            since_best = 0;
            if score >= 1.0 {
                break;
            }
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }

    let Snapshot { probe, table } = best.expect("at least one epoch");
    let train_accuracy = evaluate(&probe, table.as_ref(), &view, data);
    let dev_accuracy = dev_view.as_ref().map(|(dv, d)| evaluate(&probe, dev_table(&table, d.provider), dv, d.dataset));
    let (nuclear_norm, rank_bound) = match probe.penalized_map() {
        Some(map) => {
            let w = map.effective();
            let (r, c) = w.dim();
            (Some(crate::complexity::nuclear_norm(w.view())?), Some(map.rank_cap().unwrap_or(r.min(c))))
        }
        None => (None, None),
    };
    Ok(TrainedProbe {
        spec: *spec,
        task,
        probe,
        table,
        train_accuracy,
        dev_accuracy,
        nuclear_norm,
        rank_bound,
        epochs,
        steps: step,
    })
}

fn dev_table<'t>(table: &'t Option<Array2<f64>>, provider: &RepresentationProvider) -> Option<&'t Array2<f64>> {
    if provider.trainable() {
        table.as_ref()
    } else {
        None
    }
}

fn sentence_of(data: &TaskDataset, i: usize) -> (usize, &[usize]) {
    match (&data.instances[i].input, &data.instances[i].target) {
        (InputRef::Sentence { sent }, Target::Heads(h)) => (*sent, h.as_slice()),
        _ => panic!("parsing instance expected"),
    }
}

fn scatter_rows(ra: &mut RowAdam, view: &FeatureView, data: &TaskDataset, idx: &[usize], dx: &Array2<f64>) {
    let d = view.dim();
    for (r, &i) in idx.iter().enumerate() {
        match data.instances[i].input {
            InputRef::Token { sent, index } => {
                if let Some(row) = view.vocab_row(sent, index) {
                    ra.accumulate(row, dx.row(r));
                }
            }
            InputRef::Arc { sent, head, tail } => {
                if let Some(row) = view.vocab_row(sent, head) {
                    ra.accumulate(row, dx.slice(s![r, ..d]));
                }
                if let Some(row) = view.vocab_row(sent, tail) {
                    ra.accumulate(row, dx.slice(s![r, d..]));
                }
            }
            InputRef::Sentence { .. } => unreachable!(),
        }
    }
}

/// Accuracy for classifiers, micro-averaged UAS for parsers. Unseen gold
/// labels always count as errors.
pub fn evaluate(probe: &Probe, table: Option<&Array2<f64>>, view: &FeatureView, data: &TaskDataset) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    match data.task {
        TaskKind::Parse => {
            for i in 0..data.len() {
                let (sent, heads) = sentence_of(data, i);
                let x = view.sentence(table, sent, heads.len());
                let pred = probe.predict_heads(x.view());
                correct += pred.iter().zip(heads).filter(|(p, g)| p == g).count();
                total += heads.len();
            }
        }
        _ => {
            let idx: Vec<usize> = (0..data.len()).collect();
            for chunk in idx.chunks(EVAL_CHUNK) {
                let x = view.gather(table, data, chunk);
                let pred = probe.predict(x.view());
                for (&i, p) in chunk.iter().zip(pred) {
                    if data.instances[i].target == Target::Label(Some(p)) {
                        correct += 1;
                    }
                }
                total += chunk.len();
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}
