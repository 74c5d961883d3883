//! Config-driven experiments and the versioned results CSV.
//!
//! A config names one task, the treebank splits, the representations to
//! compare and the probe sweeps to run on each:
//!
//! ```toml
//! [experiment]
//! task = "posl"          # posl | dal | parse
//! language = "en"
//! seed = 0
//!
//! [data]
//! train = "train.conllu"
//! dev = "dev.conllu"     # optional; selects the best epoch
//! test = "test.conllu"   # optional
//!
//! [training]             # optional overrides
//! max_epochs = 20
//!
//! [[representation]]
//! name = "onehot"
//! kind = "onehot-learned"
//! dim = 64
//!
//! [[sweep]]
//! family = "linear-nuclear"
//! count = 10
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexity::{memorization_on, ComplexityMetric};
use crate::corpus::{extract_task, extract_task_with_labels, parse_conllu, CorpusError, Split, TaskDataset, TaskKind};
use crate::probes::Architecture;
use crate::representations::{
    build_provider, load_embedding_file, EmbeddingError, ProviderKind, RepresentationProvider, Vocabulary, DEFAULT_DIM,
};
use crate::training::{
    probe_input_dim, sample_sweep, train_probe, Family, NuclearUpdate, SplitData, SweepSpec, TrainConfig, TrainError,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Corpus { path: String, source: CorpusError },
    #[error("representation `{name}`: {source}")]
    Embedding { name: String, source: EmbeddingError },
    #[error("representation `{name}`, {family} probe {probe_id}: {source}")]
    Train { name: String, family: Family, probe_id: usize, source: TrainError },
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error("results file: {0}")]
    Results(String),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    data: RawData,
    #[serde(default)]
    training: RawTraining,
    #[serde(default, rename = "representation")]
    representations: Vec<RawRepresentation>,
    #[serde(default, rename = "sweep")]
    sweeps: Vec<RawSweep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    task: String,
    #[serde(default = "default_language")]
    language: String,
    #[serde(default)]
    seed: u64,
    jobs: Option<usize>,
}

fn default_language() -> String {
    "und".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    train: PathBuf,
    dev: Option<PathBuf>,
    test: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    shuffled_patience: Option<usize>,
    nuclear_update: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRepresentation {
    name: String,
    kind: String,
    dim: Option<usize>,
    seed: Option<u64>,
    path: Option<PathBuf>,
    dev_path: Option<PathBuf>,
    test_path: Option<PathBuf>,
    shuffled_path: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    family: String,
    #[serde(default = "default_count")]
    count: usize,
    seed: Option<u64>,
}

fn default_count() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

/// One representation to probe.
///
/// Type-level kinds serve every split from one provider. Contextual files
/// are per split: `path` for train, `dev_path` and `test_path`, and
/// optionally `shuffled_path` for vectors of the input-shuffled train corpus
/// (see `pprobe shuffle`), which enables fully shuffled memorization.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationSpec {
    pub name: String,
    pub kind: ProviderKind,
    pub dim: Option<usize>,
    pub seed: u64,
    pub path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub shuffled_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub language: String,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub data: DataPaths,
    pub training: TrainConfig,
    pub representations: Vec<RepresentationSpec>,
    pub sweeps: Vec<SweepSpec>,
}

impl ExperimentConfig {
    /// Reads a config file. `seed` replaces `experiment.seed`, and with it
    /// every seed that defaults to it.
    pub fn from_file(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, seed)
    }

    /// Parses and validates a config; relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path, seed: Option<u64>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let bad = |key: String, msg: String| ExperimentError::Config(format!("{key}: {msg}"));

        let task: TaskKind = raw.experiment.task.parse().map_err(|_| {
            bad(
                "experiment.task".into(),
                format!("unknown task `{}` (expected posl, dal or parse)", raw.experiment.task),
            )
        })?;
        if raw.experiment.jobs == Some(0) {
            return Err(bad("experiment.jobs".into(), "must be at least 1".into()));
        }
        let seed = seed.unwrap_or(raw.experiment.seed);
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let mut training = TrainConfig::default();
        let t = raw.training;
        if let Some(v) = t.learning_rate {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad("training.learning_rate".into(), "must be positive".into()));
            }
            training.learning_rate = v;
        }
        for (key, value, slot) in [
            ("batch_size", t.batch_size, &mut training.batch_size),
            ("max_epochs", t.max_epochs, &mut training.max_epochs),
            ("patience", t.patience, &mut training.patience),
            ("shuffled_patience", t.shuffled_patience, &mut training.shuffled_patience),
        ] {
            if let Some(v) = value {
                if v == 0 {
                    return Err(bad(format!("training.{key}"), "must be at least 1".into()));
                }
                *slot = v;
            }
        }
        if let Some(u) = t.nuclear_update {
            training.nuclear_update = match u.as_str() {
                "subgradient" => NuclearUpdate::Subgradient,
                "proximal" => NuclearUpdate::Proximal,
                _ => {
                    return Err(bad(
                        "training.nuclear_update".into(),
                        format!("unknown update `{u}` (expected subgradient or proximal)"),
                    ))
                }
            };
        }

        if raw.representations.is_empty() {
            return Err(bad("representation".into(), "at least one representation is required".into()));
        }
        let mut names = HashSet::new();
        let mut representations = Vec::new();
        for (i, r) in raw.representations.into_iter().enumerate() {
            let key = |field: &str| format!("representation[{i}].{field}");
            if r.name.is_empty() || r.name.contains([',', '\n', '"']) {
                return Err(bad(key("name"), "must be non-empty without commas, quotes or newlines".into()));
            }
            if !names.insert(r.name.clone()) {
                return Err(bad(key("name"), format!("duplicate name `{}`", r.name)));
            }
            let kind: ProviderKind = r.kind.parse().map_err(|_| {
                bad(
                    key("kind"),
                    format!(
                        "unknown kind `{}` (expected onehot-learned, random-frozen, static-file or contextual-file)",
                        r.kind
                    ),
                )
            })?;
            if r.dim == Some(0) {
                return Err(bad(key("dim"), "must be positive".into()));
            }
            let file_backed = matches!(kind, ProviderKind::StaticFile | ProviderKind::ContextualFile);
            if file_backed && r.path.is_none() {
                return Err(bad(key("path"), format!("required for {kind}")));
            }
            if !file_backed && r.path.is_some() {
                return Err(bad(key("path"), format!("not used by {kind}")));
            }
            if kind.is_contextual() {
                if raw.data.dev.is_some() && r.dev_path.is_none() {
                    return Err(bad(key("dev_path"), "contextual vectors for data.dev are required".into()));
                }
                if raw.data.test.is_some() && r.test_path.is_none() {
                    return Err(bad(key("test_path"), "contextual vectors for data.test are required".into()));
                }
            } else {
                for (field, v) in
                    [("dev_path", &r.dev_path), ("test_path", &r.test_path), ("shuffled_path", &r.shuffled_path)]
                {
                    if v.is_some() {
                        return Err(bad(key(field), format!("only contextual representations take {field}")));
                    }
                }
            }
            representations.push(RepresentationSpec {
                name: r.name,
                kind,
                dim: r.dim,
                seed: r.seed.unwrap_or(seed),
                path: r.path.map(resolve),
                dev_path: r.dev_path.map(resolve),
                test_path: r.test_path.map(resolve),
                shuffled_path: r.shuffled_path.map(resolve),
            });
        }

        let mut sweeps = Vec::new();
        let mut families = HashSet::new();
        for (i, s) in raw.sweeps.into_iter().enumerate() {
            let family: Family = s.family.parse().map_err(|e: String| bad(format!("sweep[{i}].family"), e))?;
            if !families.insert(family) {
                return Err(bad(format!("sweep[{i}].family"), format!("duplicate family `{family}`")));
            }
            if s.count == 0 {
                return Err(bad(format!("sweep[{i}].count"), "must be at least 1".into()));
            }
            sweeps.push(SweepSpec::new(family, s.count, s.seed.unwrap_or(seed)));
        }

        Ok(ExperimentConfig {
            task,
            language: raw.experiment.language,
            seed,
            jobs: raw.experiment.jobs,
            data: DataPaths {
                train: resolve(raw.data.train),
                dev: raw.data.dev.map(resolve),
                test: raw.data.test.map(resolve),
            },
            training,
            representations,
            sweeps,
        })
    }
}

pub fn load_treebank(path: &Path, split: Split, language: &str) -> Result<crate::corpus::Treebank> {
    let text =
        fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
    parse_conllu(&text, split, language)
        .map_err(|source| ExperimentError::Corpus { path: path.display().to_string(), source })
}

/// Task datasets for every configured split; dev and test use the train
/// label inventory.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub train: TaskDataset,
    pub dev: Option<TaskDataset>,
    pub test: Option<TaskDataset>,
}

pub fn load_data(config: &ExperimentConfig) -> Result<LoadedData> {
    let load = |path: &Path, split| -> Result<TaskDataset> {
        Ok(extract_task(Arc::new(load_treebank(path, split, &config.language)?), config.task))
    };
    let train = load(&config.data.train, Split::Train)?;
    if train.is_empty() {
        return Err(ExperimentError::Config(format!(
            "data.train: no {} instances in {}",
            config.task,
            config.data.train.display()
        )));
    }
    let with_labels = |path: &Option<PathBuf>, split| -> Result<Option<TaskDataset>> {
        path.as_ref()
            .map(|p| {
                let tb = load_treebank(p, split, &config.language)?;
                Ok(extract_task_with_labels(Arc::new(tb), config.task, &train.labels))
            })
            .transpose()
    };
    let dev = with_labels(&config.data.dev, Split::Dev)?;
    let test = with_labels(&config.data.test, Split::Test)?;
    Ok(LoadedData { train, dev, test })
}

/// Providers for one representation, validated against the loaded splits.
#[derive(Clone, Debug)]
pub struct LoadedRepresentation {
    pub spec: RepresentationSpec,
    pub train: RepresentationProvider,
    dev: Option<RepresentationProvider>,
    test: Option<RepresentationProvider>,
    pub shuffled: Option<RepresentationProvider>,
}

impl LoadedRepresentation {
    pub fn dev(&self) -> &RepresentationProvider {
        self.dev.as_ref().unwrap_or(&self.train)
    }

    pub fn test(&self) -> &RepresentationProvider {
        self.test.as_ref().unwrap_or(&self.train)
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

pub fn load_representation(
    spec: &RepresentationSpec,
    data: &LoadedData,
    shuffle_seed: u64,
) -> Result<LoadedRepresentation> {
    let emb = |source: EmbeddingError| ExperimentError::Embedding { name: spec.name.clone(), source };
    let load = |path: &Path| -> Result<RepresentationProvider> {
        let p = load_embedding_file(path, spec.seed).map_err(emb)?;
        if p.kind().is_contextual() != spec.kind.is_contextual() {
            return Err(ExperimentError::Config(format!(
                "representation `{}`: {} holds {} vectors, config says {}",
                spec.name,
                path.display(),
                p.kind(),
                spec.kind
            )));
        }
        if let Some(d) = spec.dim {
            if d != p.dim() {
                return Err(ExperimentError::Config(format!(
                    "representation `{}`: dim = {d} but {} has dimension {}",
                    spec.name,
                    path.display(),
                    p.dim()
                )));
            }
        }
        Ok(p)
    };
    let check = |p: &RepresentationProvider, ds: &TaskDataset| -> Result<()> {
        if let Some(store) = p.contextual_store() {
            store.validate(&ds.treebank).map_err(emb)?;
        }
        Ok(())
    };

    let (train, dev, test, shuffled) = match spec.kind {
        ProviderKind::OnehotLearned | ProviderKind::RandomFrozen => {
            let vocab = Vocabulary::from_treebank(&data.train.treebank);
            let p = build_provider(spec.kind, &vocab, spec.dim.unwrap_or(DEFAULT_DIM), spec.seed).map_err(emb)?;
            (p, None, None, None)
        }
        ProviderKind::StaticFile => (load(spec.path.as_ref().unwrap())?, None, None, None),
        ProviderKind::ContextualFile => {
            let opt = |p: &Option<PathBuf>| p.as_deref().map(load).transpose();
            (load(spec.path.as_ref().unwrap())?, opt(&spec.dev_path)?, opt(&spec.test_path)?, opt(&spec.shuffled_path)?)
        }
    };
    check(&train, &data.train)?;
    if let (Some(p), Some(ds)) = (&dev, &data.dev) {
        check(p, ds)?;
    }
    if let (Some(p), Some(ds)) = (&test, &data.test) {
        check(p, ds)?;
    }
    if let Some(p) = &shuffled {
        check(p, &data.train.shuffle_inputs(shuffle_seed))?;
    }
    for p in [&dev, &test, &shuffled].into_iter().flatten() {
        if p.dim() != train.dim() {
            return Err(ExperimentError::Config(format!(
                "representation `{}`: split files disagree on dimension ({} vs {})",
                spec.name,
                train.dim(),
                p.dim()
            )));
        }
    }
    Ok(LoadedRepresentation { spec: spec.clone(), train, dev, test, shuffled })
}

/// One trained probe under one complexity metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub language: String,
    pub task: TaskKind,
    pub representation: String,
    pub family: Family,
    pub probe_id: usize,
    pub lambda: Option<f64>,
    pub rank: Option<usize>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub complexity_metric: ComplexityMetric,
    pub complexity_value: f64,
    /// `c_max` for hypervolume normalization.
    pub complexity_bound: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub seed: u64,
}

impl ExperimentRecord {
    /// Accuracy plotted against complexity: test, else dev, else train.
    pub fn reported_accuracy(&self) -> f64 {
        self.test_accuracy.or(self.dev_accuracy).unwrap_or(self.train_accuracy)
    }

    fn key(&self) -> (&str, TaskKind, &str, Family, usize, ComplexityMetric) {
        (&self.language, self.task, &self.representation, self.family, self.probe_id, self.complexity_metric)
    }
}

/// Wall-clock cost of one record's training runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub representation: String,
    pub family: Family,
    pub probe_id: usize,
    pub complexity_metric: ComplexityMetric,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub records: Vec<ExperimentRecord>,
    pub timings: Vec<TimingRecord>,
}

struct Job<'a> {
    rep: &'a LoadedRepresentation,
    family: Family,
    spec: crate::probes::ProbeSpec,
    config: TrainConfig,
}

/// Runs every sweep on every representation. Jobs run in parallel on
/// `jobs` threads (rayon's default when `None`); records come back sorted, so
/// the output does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunOutput> {
    if config.sweeps.is_empty() {
        return Err(ExperimentError::Config("sweep: at least one sweep is required".into()));
    }
    let data = load_data(config)?;
    let reps = config
        .representations
        .iter()
        .map(|r| load_representation(r, &data, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let label_shuffled = data.train.shuffle_labels(config.seed);
    let fully_shuffled = data.train.shuffle_fully(config.seed);

    let mut work = Vec::new();
    for rep in &reps {
        for sweep in &config.sweeps {
            for (spec, cfg) in sample_sweep(sweep, &data.train, rep.dim(), &config.training) {
                work.push(Job { rep, family: sweep.family, spec, config: cfg });
            }
        }
    }

    let run = || {
        work.par_iter()
            .map(|job| run_job(config, &data, job, &label_shuffled, &fully_shuffled))
            .collect::<Result<Vec<_>>>()
    };
    let threads = jobs.or(config.jobs);
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Config(format!("jobs: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let mut out = RunOutput::default();
    for (records, timings) in results {
        out.records.extend(records);
        out.timings.extend(timings);
    }
    out.records.sort_by(|a, b| a.key().cmp(&b.key()));
    out.timings.sort_by(|a, b| {
        (&a.representation, a.family, a.probe_id, a.complexity_metric).cmp(&(
            &b.representation,
            b.family,
            b.probe_id,
            b.complexity_metric,
        ))
    });
    Ok(out)
}

fn run_job(
    config: &ExperimentConfig,
    data: &LoadedData,
    job: &Job,
    label_shuffled: &TaskDataset,
    fully_shuffled: &TaskDataset,
) -> Result<(Vec<ExperimentRecord>, Vec<TimingRecord>)> {
    let rep = job.rep;
    let fail = |source: TrainError| ExperimentError::Train {
        name: rep.spec.name.clone(),
        family: job.family,
        probe_id: job.spec.id,
        source,
    };
    let start = Instant::now();
    let dev = data.dev.as_ref().map(|d| SplitData::new(d, rep.dev()));
    let trained = train_probe(&job.spec, SplitData::new(&data.train, &rep.train), dev, &job.config).map_err(fail)?;
    let test_accuracy =
        data.test.as_ref().map(|t| trained.evaluate(SplitData::new(t, rep.test()))).transpose().map_err(fail)?;
    let real_secs = start.elapsed().as_secs_f64();
    log::info!("{} {} probe {}: train {:.4}", rep.spec.name, job.family, job.spec.id, trained.train_accuracy);

    let (lambda, rank, layers, hidden, dropout) = match job.spec.arch {
        Architecture::Linear { rank } => (Some(job.config.lambda), rank, None, None, None),
        Architecture::Mlp { layers, hidden, dropout } => (None, None, Some(layers), Some(hidden), Some(dropout)),
    };
    let n_labels = data.train.num_labels();
    let d = rep.dim();
    let record = |metric: ComplexityMetric, value: f64| ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        language: config.language.clone(),
        task: config.task,
        representation: rep.spec.name.clone(),
        family: job.family,
        probe_id: job.spec.id,
        lambda,
        rank,
        layers,
        hidden,
        dropout,
        complexity_metric: metric,
        complexity_value: value,
        complexity_bound: metric.bound(config.task, n_labels, d),
        train_accuracy: trained.train_accuracy,
        dev_accuracy: trained.dev_accuracy,
        test_accuracy,
        seed: job.config.seed,
    };
    let timing = |metric, wall_seconds| TimingRecord {
        representation: rep.spec.name.clone(),
        family: job.family,
        probe_id: job.spec.id,
        complexity_metric: metric,
        wall_seconds,
    };

    let mut records = Vec::new();
    let mut timings = Vec::new();
    match job.family {
        Family::LinearNuclear => {
            let value = trained.nuclear_norm.expect("linear probes record their norm");
            records.push(record(ComplexityMetric::NuclearNorm, value));
            timings.push(timing(ComplexityMetric::NuclearNorm, real_secs));
        }
        Family::LinearRank => {
            let r = rank.unwrap_or_else(|| probe_input_dim(config.task, d));
            records.push(record(ComplexityMetric::Rank, r as f64));
            timings.push(timing(ComplexityMetric::Rank, real_secs));
        }
        Family::Mlp => {
            let mut shuffled_runs = vec![(ComplexityMetric::LabelShuffled, label_shuffled, &rep.train)];
            if let Some(p) = &rep.shuffled {
                shuffled_runs.push((ComplexityMetric::FullyShuffled, fully_shuffled, p));
            }
            for (metric, dataset, provider) in shuffled_runs {
                let t = Instant::now();
                let score = memorization_on(&job.spec, provider, dataset, &job.config, metric).map_err(fail)?;
                records.push(record(metric, score.value));
                timings.push(timing(metric, real_secs + t.elapsed().as_secs_f64()));
            }
        }
    }
    Ok((records, timings))
}

pub fn write_results<W: io::Write>(writer: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| ExperimentError::Results(e.to_string()))?;
    Ok(())
}

const HEADER: [&str; 18] = [
    "schema_version",
    "language",
    "task",
    "representation",
    "family",
    "probe_id",
    "lambda",
    "rank",
    "layers",
    "hidden",
    "dropout",
    "complexity_metric",
    "complexity_value",
    "complexity_bound",
    "train_accuracy",
    "dev_accuracy",
    "test_accuracy",
    "seed",
];

/// Parses a results CSV, checking the header, the schema version and the
/// uniqueness of each `(language, task, representation, family, probe_id,
/// metric)` key.
pub fn read_results<R: io::Read>(reader: R) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(ExperimentError::Results(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out: Vec<ExperimentRecord> = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in r.deserialize().enumerate() {
        let rec: ExperimentRecord = row?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(ExperimentError::Results(format!(
                "row {}: schema version {} (expected {SCHEMA_VERSION})",
                i + 2,
                rec.schema_version
            )));
        }
        let key = format!("{:?}", rec.key());
        if !seen.insert(key) {
            return Err(ExperimentError::Results(format!("row {}: duplicate probe key", i + 2)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_timings<W: io::Write>(writer: W, timings: &[TimingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in timings {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| ExperimentError::Results(e.to_string()))?;
    Ok(())
}

/// Path of the wall-time sidecar written next to a results file.
pub fn timing_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().unwrap_or_default().to_os_string();
    name.push(".timing.csv");
    results.with_file_name(name)
}
