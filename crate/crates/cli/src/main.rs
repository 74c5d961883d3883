//! `pprobe`: run Pareto probing experiments and report on their results.
//!
//! Exit codes: 0 on success, 2 for invalid configs or arguments, 1 for any
//! other failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pareto_probe::complexity::ComplexityMetric;
use pareto_probe::corpus::{write_conllu, TaskKind};
use pareto_probe::eval::LookupTable;
use pareto_probe::experiment::{
    load_data, load_representation, read_results, run_experiment, timing_path, write_results, write_timings,
    ExperimentConfig, ExperimentError,
};
use pareto_probe::report::{frontier_report, hypervolume_report, plot_report, ReportFilter};

#[derive(Parser)]
#[command(name = "pprobe", version, about = "Pareto probing of word representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the treebanks and embedding files named by a config.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured sweep and write the results CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV; wall times go to `<out>.timing.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Frontier or hypervolume tables, or an SVG plot, from a results CSV.
    Report {
        results: PathBuf,
        #[arg(long, value_enum)]
        mode: ReportMode,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        representation: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the shuffled train split as CoNLL-U.
    Shuffle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "fully")]
        mode: ShuffleMode,
        /// Defaults to `experiment.seed`, matching what `sweep` uses.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dictionary-lookup baseline accuracy on every configured split.
    Lookup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportMode {
    Frontier,
    Hypervolume,
    Plot,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShuffleMode {
    Labels,
    Inputs,
    Fully,
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest { config, out } => {
            let cfg = ExperimentConfig::from_file(&config, None)?;
            let data = load_data(&cfg)?;
            let mut text = String::new();
            for (split, ds) in [("train", Some(&data.train)), ("dev", data.dev.as_ref()), ("test", data.test.as_ref())]
            {
                if let Some(ds) = ds {
                    text += &format!(
                        "{split}: {} sentences, {} tokens, {} {} instances\n",
                        ds.treebank.sentences.len(),
                        ds.treebank.num_tokens(),
                        ds.len(),
                        cfg.task
                    );
                }
            }
            text += &format!("labels: {}\n", data.train.num_labels());
            for spec in &cfg.representations {
                let rep = load_representation(spec, &data, cfg.seed)?;
                let vocab = rep.train.vocabulary().map_or(String::new(), |v| format!(", {} word types", v.len()));
                text += &format!("representation {}: {}, dim {}{vocab}\n", spec.name, spec.kind, rep.dim());
            }
            emit(out.as_deref(), &text)
        }
        Command::Sweep { config, out, seed, jobs } => {
            if jobs == Some(0) {
                return Err(Failure::Config("--jobs must be at least 1".into()));
            }
            let cfg = ExperimentConfig::from_file(&config, seed)?;
            let output = run_experiment(&cfg, jobs)?;
            let mut buf = Vec::new();
            write_results(&mut buf, &output.records)?;
            match out {
                Some(path) => {
                    write_file(&path, &buf)?;
                    let mut timing = Vec::new();
                    write_timings(&mut timing, &output.timings)?;
                    write_file(&timing_path(&path), &timing)?;
                    Ok(())
                }
                None => io::stdout().write_all(&buf).map_err(|e| Failure::Other(e.to_string())),
            }
        }
        Command::Report { results, mode, metric, representation, out } => {
            let metric = metric.map(|m| m.parse::<ComplexityMetric>()).transpose().map_err(Failure::Config)?;
            let file = fs::File::open(&results).map_err(|e| Failure::Other(format!("{}: {e}", results.display())))?;
            let records = read_results(file)?;
            let filter = ReportFilter { metric, representation };
            let report = match mode {
                ReportMode::Frontier => frontier_report(&records, &filter),
                ReportMode::Hypervolume => hypervolume_report(&records, &filter),
                ReportMode::Plot => plot_report(&records, &filter),
            };
            for w in &report.warnings {
                log::warn!("{w}");
            }
            emit(out.as_deref(), &report.body)
        }
        Command::Shuffle { config, mode, seed, out } => {
            let cfg = ExperimentConfig::from_file(&config, seed)?;
            let data = load_data(&cfg)?;
            let shuffled = match mode {
                ShuffleMode::Labels => data.train.shuffle_labels(cfg.seed),
                ShuffleMode::Inputs => data.train.shuffle_inputs(cfg.seed),
                ShuffleMode::Fully => data.train.shuffle_fully(cfg.seed),
            };
            emit(out.as_deref(), &write_conllu(&shuffled.to_treebank()))
        }
        Command::Lookup { config, out } => {
            let cfg = ExperimentConfig::from_file(&config, None)?;
            if cfg.task == TaskKind::Parse {
                return Err(Failure::Config("experiment.task: lookup baselines cover posl and dal".into()));
            }
            let data = load_data(&cfg)?;
            let table = LookupTable::build(&data.train);
            let mut text = String::from("split,accuracy\n");
            for (split, ds) in [("train", Some(&data.train)), ("dev", data.dev.as_ref()), ("test", data.test.as_ref())]
            {
                if let Some(ds) = ds {
                    let acc = table.evaluate(ds).map_err(|e| Failure::Other(e.to_string()))?;
                    text += &format!("{split},{acc}\n");
                }
            }
            emit(out.as_deref(), &text)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Other(e.to_string())),
    }
}
