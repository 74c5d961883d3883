//! Complexity coordinates for trained probes.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::corpus::{TaskDataset, TaskKind};
use crate::linalg::{singular_values, SvdError};
use crate::probes::ProbeSpec;
use crate::representations::RepresentationProvider;
use crate::training::{rank_limit, train_probe, Objective, SplitData, TrainConfig, TrainError};

/// Relative tolerance for numerical rank.
pub const RANK_TOL: f64 = 1e-8;
/// Hypervolume bound on the nuclear norm for POSL and DAL.
pub const NUCLEAR_BOUND_LABELING: f64 = 400.0;
/// Hypervolume bound on the nuclear norm for parsing.
pub const NUCLEAR_BOUND_PARSING: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexityMetric {
    NuclearNorm,
    Rank,
    LabelShuffled,
    FullyShuffled,
}

impl ComplexityMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ComplexityMetric::NuclearNorm => "nuclear-norm",
            ComplexityMetric::Rank => "rank",
            ComplexityMetric::LabelShuffled => "label-shuffled",
            ComplexityMetric::FullyShuffled => "fully-shuffled",
        }
    }

    pub fn is_shuffled(self) -> bool {
        matches!(self, ComplexityMetric::LabelShuffled | ComplexityMetric::FullyShuffled)
    }

    /// `c_max` used to normalize this metric's hypervolume.
    pub fn bound(self, task: TaskKind, n_labels: usize, d: usize) -> f64 {
        match self {
            ComplexityMetric::NuclearNorm if task == TaskKind::Parse => NUCLEAR_BOUND_PARSING,
            ComplexityMetric::NuclearNorm => NUCLEAR_BOUND_LABELING,
            ComplexityMetric::Rank => rank_limit(task, n_labels, d).max(1) as f64,
            ComplexityMetric::LabelShuffled | ComplexityMetric::FullyShuffled => 1.0,
        }
    }
}

impl fmt::Display for ComplexityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComplexityMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nuclear-norm" => Ok(ComplexityMetric::NuclearNorm),
            "rank" => Ok(ComplexityMetric::Rank),
            "label-shuffled" => Ok(ComplexityMetric::LabelShuffled),
            "fully-shuffled" => Ok(ComplexityMetric::FullyShuffled),
            _ => Err(format!("unknown complexity metric `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityScore {
    pub metric: ComplexityMetric,
    pub value: f64,
    pub bound: f64,
}

pub fn nuclear_norm(w: ArrayView2<f64>) -> Result<f64, SvdError> {
    Ok(singular_values(w)?.sum())
}

/// Number of singular values above `tol · σ_max`.
///
/// # Panics
///
/// If `tol` is not positive.
pub fn matrix_rank(w: ArrayView2<f64>, tol: f64) -> Result<usize, SvdError> {
    assert!(tol > 0.0, "rank tolerance must be positive");
    let sv = singular_values(w)?;
    let cutoff = sv.first().copied().unwrap_or(0.0) * tol;
    Ok(sv.iter().filter(|&&s| s > cutoff && s > 0.0).count())
}

/// Train accuracy of a fresh probe fitted to shuffled training data.
///
/// Label-shuffled mode permutes targets with `config.seed`. Fully shuffled
/// mode additionally permutes the corpus forms; since contextual vectors
/// cannot be recomputed here, `provider` must be a contextual store exported
/// from `dataset.shuffle_inputs(config.seed).treebank`. Type-level providers
/// are rejected because input shuffling leaves their instance set unchanged.
pub fn memorization_score(
    spec: &ProbeSpec,
    provider: &RepresentationProvider,
    dataset: &TaskDataset,
    config: &TrainConfig,
    mode: ComplexityMetric,
) -> Result<ComplexityScore, TrainError> {
    let shuffled = match mode {
        ComplexityMetric::LabelShuffled => dataset.shuffle_labels(config.seed),
        ComplexityMetric::FullyShuffled => {
            if !provider.kind().is_contextual() {
                return Err(TrainError::Config(format!(
                    "fully shuffled memorization needs a contextual provider, got {}",
                    provider.kind().as_str()
                )));
            }
            dataset.shuffle_fully(config.seed)
        }
        other => return Err(TrainError::Config(format!("{other} is not a memorization metric"))),
    };
    memorization_on(spec, provider, &shuffled, config, mode)
}

/// Like [`memorization_score`], for data that is already shuffled.
pub fn memorization_on(
    spec: &ProbeSpec,
    provider: &RepresentationProvider,
    shuffled: &TaskDataset,
    config: &TrainConfig,
    mode: ComplexityMetric,
) -> Result<ComplexityScore, TrainError> {
    let objective = match mode {
        ComplexityMetric::LabelShuffled => Objective::LabelShuffled,
        ComplexityMetric::FullyShuffled => Objective::FullyShuffled,
        other => return Err(TrainError::Config(format!("{other} is not a memorization metric"))),
    };
    let config = TrainConfig { objective, lambda: 0.0, ..config.clone() };
    let trained = train_probe(spec, SplitData::new(shuffled, provider), None, &config)?;
    Ok(ComplexityScore { metric: mode, value: trained.train_accuracy, bound: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn identity_and_diagonal() {
        assert!((nuclear_norm(Array2::<f64>::eye(3).view()).unwrap() - 3.0).abs() < 1e-12);
        assert!((nuclear_norm(array![[2.0, 0.0], [0.0, -3.0]].view()).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(nuclear_norm(Array2::<f64>::zeros((2, 3)).view()).unwrap(), 0.0);
    }

    #[test]
    fn rank_of_simple_matrices() {
        assert_eq!(matrix_rank(Array2::<f64>::zeros((4, 3)).view(), RANK_TOL).unwrap(), 0);
        let u = array![[1.0], [2.0], [-1.0]];
        let v = array![[0.5, 3.0, 1.0, -2.0]];
        assert_eq!(matrix_rank(u.dot(&v).view(), RANK_TOL).unwrap(), 1);
        assert_eq!(matrix_rank(Array2::<f64>::eye(5).view(), RANK_TOL).unwrap(), 5);
    }

    #[test]
    fn bounds() {
        assert_eq!(ComplexityMetric::NuclearNorm.bound(TaskKind::Posl, 17, 768), 400.0);
        assert_eq!(ComplexityMetric::NuclearNorm.bound(TaskKind::Dal, 37, 768), 400.0);
        assert_eq!(ComplexityMetric::NuclearNorm.bound(TaskKind::Parse, 0, 768), 700.0);
        assert_eq!(ComplexityMetric::Rank.bound(TaskKind::Posl, 17, 768), 17.0);
        assert_eq!(ComplexityMetric::Rank.bound(TaskKind::Posl, 17, 4), 4.0);
        assert_eq!(ComplexityMetric::LabelShuffled.bound(TaskKind::Parse, 0, 768), 1.0);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [
            ComplexityMetric::NuclearNorm,
            ComplexityMetric::Rank,
            ComplexityMetric::LabelShuffled,
            ComplexityMetric::FullyShuffled,
        ] {
            assert_eq!(m.as_str().parse::<ComplexityMetric>().unwrap(), m);
        }
    }
}
