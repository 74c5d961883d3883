//! Synthetic corpora and providers shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::sync::Arc;

use ndarray::Array2;
use pareto_probe::corpus::{extract_task, Sentence, Split, TaskDataset, TaskKind, Token, Treebank};
use pareto_probe::representations::{ContextualStore, RepresentationProvider};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const TAGS: [&str; 6] = ["ADJ", "ADP", "DET", "NOUN", "PRON", "VERB"];
pub const RELS: [&str; 4] = ["amod", "case", "det", "nsubj"];

/// Random projective-ish treebank: each token's head is drawn among the other
/// tokens or the root (exactly one root per sentence). Forms come from a
/// `vocab`-word pool; tags from [`TAGS`].
pub fn random_treebank(sentences: usize, len: usize, vocab: usize, seed: u64) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..sentences)
        .map(|s| {
            let root = rng.random_range(0..len);
            let tokens = (0..len)
                .map(|i| {
                    let head = if i == root {
                        0
                    } else {
                        let mut h = rng.random_range(0..len);
                        if h == i {
                            h = root;
                        }
                        h + 1
                    };
                    Token {
                        form: format!("w{}", rng.random_range(0..vocab)),
                        upos: TAGS[rng.random_range(0..TAGS.len())].to_string(),
                        head,
                        deprel: if head == 0 {
                            "root".into()
                        } else {
                            RELS[rng.random_range(0..RELS.len())].to_string()
                        },
                    }
                })
                .collect();
            Sentence { tokens, sent_index: s }
        })
        .collect();
    Treebank { split: Split::Train, language: "xx".into(), sentences }
}

pub fn dataset(tb: Treebank, task: TaskKind) -> TaskDataset {
    extract_task(Arc::new(tb), task)
}

/// Contextual provider with i.i.d. standard-normal token vectors.
pub fn gaussian_contextual(tb: &Treebank, dim: usize, seed: u64) -> RepresentationProvider {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = tb
        .sentences
        .iter()
        .map(|s| {
            Array2::from_shape_simple_fn((s.len(), dim), || {
                let x: f64 = StandardNormal.sample(&mut rng);
                x as f32
            })
        })
        .collect();
    RepresentationProvider::from_contextual(ContextualStore::new(dim, sentences).unwrap())
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Treebank from `(form, tag)` sentences; token `i` attaches to token `i - 1`
/// and the first token to the root.
pub fn tagged_treebank(sentences: &[Vec<(String, String)>]) -> Treebank {
    let sentences = sentences
        .iter()
        .enumerate()
        .map(|(s, toks)| Sentence {
            tokens: toks
                .iter()
                .enumerate()
                .map(|(i, (form, tag))| Token {
                    form: form.clone(),
                    upos: tag.clone(),
                    head: i,
                    deprel: if i == 0 { "root".into() } else { "dep".into() },
                })
                .collect(),
            sent_index: s,
        })
        .collect();
    Treebank { split: Split::Train, language: "xx".into(), sentences }
}

/// Contextual provider with the given rows, one matrix per sentence.
pub fn contextual(dim: usize, sentences: Vec<Array2<f64>>) -> RepresentationProvider {
    let store = ContextualStore::new(dim, sentences.into_iter().map(|m| m.mapv(|v| v as f32)).collect()).unwrap();
    RepresentationProvider::from_contextual(store)
}

/// Error-free transformation `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Dot product in twice the working precision (compensated `Dot2`).
pub fn dot2(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (x, y) in a.into_iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let (t, e) = two_sum(s, p);
        s = t;
        c += e + pe;
    }
    s + c
}

/// Softmax with a compensated normalizer.
pub fn softmax_ref(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| if l.is_finite() { (l - m).exp() } else { 0.0 }).collect();
    let z = dot2(e.iter().copied(), std::iter::repeat(1.0));
    e.iter().map(|v| v / z).collect()
}
