use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{probe_input_dim, Family, TrainConfig};
use crate::corpus::{TaskDataset, TaskKind};
use crate::probes::{Architecture, ProbeSpec};

pub const LAMBDA_MIN_LOG2: f64 = -10.0;
pub const LAMBDA_MAX_LOG2: f64 = 3.0;
pub const MAX_LAYERS: usize = 5;
pub const MAX_DROPOUT: f64 = 0.5;
pub const HIDDEN_MIN_LOG2: f64 = 5.0;
pub const HIDDEN_MAX_LOG2: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepSpec {
    pub family: Family,
    /// Total number of probes, including the unregularized one.
    pub count: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(family: Family, count: usize, seed: u64) -> Self {
        SweepSpec { family, count, seed }
    }
}

/// Largest useful rank cap for a task: `min(|𝒯|, input width)` for
/// classifiers and `d` for the bilinear parser.
pub fn rank_limit(task: TaskKind, n_labels: usize, d: usize) -> usize {
    match task {
        TaskKind::Parse => d,
        _ => n_labels.min(probe_input_dim(task, d)),
    }
}

/// Draws `count` probe configurations. The nuclear-norm family always
/// includes `λ = 0` as probe 0; other probes sample `log₂ λ` uniformly.
/// Each job gets its own training seed derived from the sweep seed.
pub fn sample_sweep(
    sweep: &SweepSpec,
    dataset: &TaskDataset,
    d: usize,
    base: &TrainConfig,
) -> Vec<(ProbeSpec, TrainConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(sweep.seed);
    rng.set_stream(family_stream(sweep.family));
    let max_rank = rank_limit(dataset.task, dataset.num_labels(), d).max(1);
    let mut out = Vec::with_capacity(sweep.count);
    for id in 0..sweep.count {
        let (arch, lambda) = match sweep.family {
            Family::LinearNuclear => {
                let lambda = if id == 0 { 0.0 } else { rng.random_range(LAMBDA_MIN_LOG2..=LAMBDA_MAX_LOG2).exp2() };
                (Architecture::Linear { rank: None }, lambda)
            }
            Family::LinearRank => {
                let r = (rng.random_range(0.0..=(max_rank as f64).ln())).exp().round() as usize;
                (Architecture::Linear { rank: Some(r.clamp(1, max_rank)) }, 0.0)
            }
            Family::Mlp => {
                let layers = rng.random_range(0..=MAX_LAYERS);
                let dropout = rng.random_range(0.0..=MAX_DROPOUT);
                let hidden = rng.random_range(HIDDEN_MIN_LOG2..=HIDDEN_MAX_LOG2).exp2().round() as usize;
                (Architecture::Mlp { layers, hidden, dropout }, 0.0)
            }
        };
        let config = TrainConfig { lambda, seed: rng.next_u64(), ..base.clone() };
        out.push((ProbeSpec { id, arch }, config));
    }
    out
}

fn family_stream(family: Family) -> u64 {
    match family {
        Family::LinearNuclear => 10,
        Family::LinearRank => 11,
        Family::Mlp => 12,
    }
}
