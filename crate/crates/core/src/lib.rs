//! Pareto probing for word representations.
//!
//! Probes of increasing complexity are trained on top of frozen (or, for
//! one-hot, learned) word representations. Each trained probe yields a
//! `(complexity, accuracy)` point; the non-dominated points of a
//! representation form its Pareto frontier, and the normalized area under
//! that frontier is its Pareto hypervolume.
//!
//! The crate is organized bottom-up:
//!
//! - [`corpus`]: CoNLL-U ingestion, task extraction (POSL, DAL, parsing) and
//!   the shuffled datasets used by memorization metrics.
//! - [`representations`]: learned, random and file-backed token vectors.
//! - [`linalg`]: dense helpers and the Jacobi SVD used for nuclear norms.
//! - [`probes`]: linear, MLP and biaffine parser probes with hand-written
//!   backpropagation.
//! - [`training`]: losses, the optimizer loop and hyperparameter sweeps.
//! - [`complexity`]: nuclear norm, rank and memorization scores.
//! - [`pareto`]: dominance, frontiers and 2-D hypervolume.
//! - [`eval`]: accuracy, UAS and dictionary-lookup baselines.
//! - [`experiment`] and [`report`]: config-driven runs, results CSV, tables
//!   and SVG plots.

pub mod complexity;
pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod pareto;
pub mod probes;
pub mod report;
pub mod representations;
pub mod training;

pub use complexity::{matrix_rank, memorization_score, nuclear_norm, ComplexityMetric, ComplexityScore};
pub use corpus::{parse_conllu, Sentence, Split, TaskDataset, TaskKind, Token, Treebank};
pub use pareto::{dominates, hypervolume, pareto_frontier, Frontier, HypervolumeResult, ProbePoint, Provenance};
pub use probes::{Architecture, Probe, ProbeSpec};
pub use representations::{RepresentationProvider, Vocabulary};
pub use training::{train_probe, Family, Objective, SweepSpec, TrainConfig, TrainedProbe};
