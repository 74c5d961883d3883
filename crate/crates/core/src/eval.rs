//! Task metrics and dictionary-lookup baselines.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{InputRef, Target, TaskDataset, TaskKind};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {predicted} predictions for {gold} gold items")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("nothing to score")]
    Empty,
    #[error("lookup baseline for {expected} applied to a {found} dataset")]
    WrongTask { expected: TaskKind, found: TaskKind },
}

pub fn accuracy<T: PartialEq>(predictions: &[T], golds: &[T]) -> Result<f64, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch { predicted: predictions.len(), gold: golds.len() });
    }
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Micro-averaged unlabeled attachment score.
pub fn uas(pred_heads: &[Vec<usize>], gold_heads: &[Vec<usize>]) -> Result<f64, EvalError> {
    if pred_heads.len() != gold_heads.len() {
        return Err(EvalError::LengthMismatch { predicted: pred_heads.len(), gold: gold_heads.len() });
    }
    let mut hits = 0;
    let mut total = 0;
    for (p, g) in pred_heads.iter().zip(gold_heads) {
        if p.len() != g.len() {
            return Err(EvalError::LengthMismatch { predicted: p.len(), gold: g.len() });
        }
        hits += p.iter().zip(g).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    if total == 0 {
        return Err(EvalError::Empty);
    }
    Ok(hits as f64 / total as f64)
}

/// Most-frequent-label dictionaries with fallbacks, built from a train split.
///
/// POSL has one level keyed by word form. DAL has three, tried in order:
/// the `(head, tail)` form pair, the tail form, then the head form. Both
/// fall back to the globally most frequent label. Ties go to the
/// lexicographically smallest label.
#[derive(Clone, Debug, PartialEq)]
pub struct LookupTable {
    pub task: TaskKind,
    pub labels: Vec<String>,
    levels: Vec<HashMap<String, usize>>,
    global: Option<usize>,
}

impl LookupTable {
    /// # Panics
    ///
    /// On a parsing dataset.
    pub fn build(train: &TaskDataset) -> Self {
        assert!(train.task != TaskKind::Parse, "lookup baselines cover POSL and DAL");
        let n_levels = if train.task == TaskKind::Dal { 3 } else { 1 };
        let n = train.num_labels();
        let mut counts: Vec<HashMap<String, Vec<usize>>> = vec![HashMap::new(); n_levels];
        let mut global = vec![0usize; n];
        for inst in &train.instances {
            let Target::Label(Some(label)) = inst.target else { continue };
            global[label] += 1;
            for (level, key) in keys(train, &inst.input).into_iter().enumerate() {
                counts[level].entry(key).or_insert_with(|| vec![0; n])[label] += 1;
            }
        }
        LookupTable {
            task: train.task,
            labels: train.labels.clone(),
            levels: counts
                .into_iter()
                .map(|m| m.into_iter().map(|(k, c)| (k, majority(&c).unwrap())).collect())
                .collect(),
            global: majority(&global),
        }
    }

    /// Predicted label name for an instance of `data`.
    pub fn predict(&self, data: &TaskDataset, input: &InputRef) -> Option<&str> {
        keys(data, input)
            .iter()
            .zip(&self.levels)
            .find_map(|(k, level)| level.get(k).copied())
            .or(self.global)
            .map(|id| self.labels[id].as_str())
    }

    pub fn evaluate(&self, data: &TaskDataset) -> Result<f64, EvalError> {
        if data.task != self.task {
            return Err(EvalError::WrongTask { expected: self.task, found: data.task });
        }
        if data.is_empty() {
            return Err(EvalError::Empty);
        }
        let hits = data
            .instances
            .iter()
            .filter(|inst| match inst.target {
                Target::Label(Some(g)) => self.predict(data, &inst.input) == Some(data.labels[g].as_str()),
                _ => false,
            })
            .count();
        Ok(hits as f64 / data.len() as f64)
    }
}

/// Index of the highest count; the first (smallest label) among ties.
fn majority(counts: &[usize]) -> Option<usize> {
    let max = *counts.iter().max()?;
    (max > 0).then(|| counts.iter().position(|&c| c == max).unwrap())
}

fn keys(data: &TaskDataset, input: &InputRef) -> Vec<String> {
    let form = |sent: usize, i: usize| data.treebank.sentences[sent].tokens[i].form.clone();
    match *input {
        InputRef::Token { sent, index } => vec![form(sent, index)],
        InputRef::Arc { sent, head, tail } => {
            let (h, t) = (form(sent, head), form(sent, tail));
            vec![format!("{h}\t{t}"), t, h]
        }
        InputRef::Sentence { .. } => Vec::new(),
    }
}

fn lookup(task: TaskKind, train: &TaskDataset, eval: &TaskDataset) -> Result<f64, EvalError> {
    for d in [train, eval] {
        if d.task != task {
            return Err(EvalError::WrongTask { expected: task, found: d.task });
        }
    }
    LookupTable::build(train).evaluate(eval)
}

pub fn lookup_posl(train: &TaskDataset, eval: &TaskDataset) -> Result<f64, EvalError> {
    lookup(TaskKind::Posl, train, eval)
}

pub fn lookup_dal(train: &TaskDataset, eval: &TaskDataset) -> Result<f64, EvalError> {
    lookup(TaskKind::Dal, train, eval)
}
