//! Token representations: learned "one-hot" tables, frozen random vectors,
//! and static or contextual vectors loaded from disk.
//!
//! Binary formats (all little-endian, all floats finite):
//!
//! ```text
//! static:     "PPEMB1\0" u32 V  u32 d  V × [u16 len, len bytes UTF-8, d × f32]
//! contextual: "PPCTX1\0" u32 d  u32 S  S × [u32 sent_index, u32 L, L × d × f32]
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayViewMut1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{InputRef, Sentence, TaskDataset, Treebank};

pub const STATIC_MAGIC: &[u8; 7] = b"PPEMB1\0";
pub const CONTEXTUAL_MAGIC: &[u8; 7] = b"PPCTX1\0";
pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic at byte 0: expected PPEMB1 or PPCTX1")]
    BadMagic,
    #[error("truncated payload at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("non-finite float at byte {offset}")]
    NonFinite { offset: usize },
    #[error("invalid UTF-8 word at byte {offset}")]
    Utf8 { offset: usize },
    #[error("{extra} trailing bytes after payload at byte {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("sentence {sent_index}: store has {found} rows but the sentence has {expected} tokens")]
    LengthMismatch { sent_index: usize, expected: usize, found: usize },
    #[error("duplicate or out-of-range sentence index {index} at byte {offset}")]
    SentenceIndex { offset: usize, index: usize },
    #[error("sentence {0} missing from contextual store")]
    MissingSentence(usize),
    #[error("contextual store has {found} sentences, treebank has {expected}")]
    SentenceCount { expected: usize, found: usize },
    #[error("provider kind {0} is file-backed; load it from a file")]
    NeedsFile(ProviderKind),
    #[error("unknown representation kind `{0}`")]
    UnknownKind(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProviderKind {
    OnehotLearned,
    RandomFrozen,
    StaticFile,
    ContextualFile,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::OnehotLearned => "onehot-learned",
            ProviderKind::RandomFrozen => "random-frozen",
            ProviderKind::StaticFile => "static-file",
            ProviderKind::ContextualFile => "contextual-file",
        }
    }

    pub fn is_contextual(self) -> bool {
        self == ProviderKind::ContextualFile
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProviderKind {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "onehot-learned" | "onehot" | "one-hot" => Ok(ProviderKind::OnehotLearned),
            "random-frozen" | "random" => Ok(ProviderKind::RandomFrozen),
            "static-file" | "static" => Ok(ProviderKind::StaticFile),
            "contextual-file" | "contextual" => Ok(ProviderKind::ContextualFile),
            _ => Err(EmbeddingError::UnknownKind(s.to_string())),
        }
    }
}

/// Word types of the train split, ids in order of first occurrence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    words: Vec<String>,
}

impl Vocabulary {
    pub fn from_treebank(treebank: &Treebank) -> Self {
        Self::from_words(treebank.forms())
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Vocabulary::default();
        for w in words {
            if !vocab.index.contains_key(w) {
                vocab.index.insert(w.to_string(), vocab.words.len());
                vocab.words.push(w.to_string());
            }
        }
        vocab
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Standard-normal vector keyed by `(word, seed)`.
///
/// The key is hashed into a ChaCha seed, so the same word and seed give the
/// same vector in every process.
pub fn word_vector(word: &str, seed: u64, dim: usize) -> Array1<f64> {
    let mut hasher = Sha256::new();
    hasher.update(b"pprobe-word\0");
    hasher.update(seed.to_le_bytes());
    hasher.update(word.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Per-sentence contextual vectors, indexed by `sent_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualStore {
    dim: usize,
    sentences: Vec<Array2<f32>>,
}

impl ContextualStore {
    pub fn new(dim: usize, sentences: Vec<Array2<f32>>) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        assert!(sentences.iter().all(|m| m.ncols() == dim), "row width must equal dim");
        Ok(ContextualStore { dim, sentences })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, sent_index: usize) -> Option<&Array2<f32>> {
        self.sentences.get(sent_index)
    }

    /// Checks sentence count and every sentence length against `treebank`.
    pub fn validate(&self, treebank: &Treebank) -> Result<(), EmbeddingError> {
        if self.sentences.len() != treebank.sentences.len() {
            return Err(EmbeddingError::SentenceCount {
                expected: treebank.sentences.len(),
                found: self.sentences.len(),
            });
        }
        for s in &treebank.sentences {
            self.check(s)?;
        }
        Ok(())
    }

    fn check(&self, sentence: &Sentence) -> Result<&Array2<f32>, EmbeddingError> {
        let m = self.get(sentence.sent_index).ok_or(EmbeddingError::MissingSentence(sentence.sent_index))?;
        if m.nrows() != sentence.len() {
            return Err(EmbeddingError::LengthMismatch {
                sent_index: sentence.sent_index,
                expected: sentence.len(),
                found: m.nrows(),
            });
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Table { vocab: Vocabulary, table: Array2<f64> },
    Contextual(ContextualStore),
}

/// Maps tokens to `dim`-wide vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationProvider {
    kind: ProviderKind,
    dim: usize,
    seed: u64,
    source: Source,
}

/// Builds a table-backed provider whose per-type rows are drawn from
/// [`word_vector`]. Only the two in-memory kinds are accepted.
pub fn build_provider(
    kind: ProviderKind,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<RepresentationProvider, EmbeddingError> {
    if dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    if matches!(kind, ProviderKind::StaticFile | ProviderKind::ContextualFile) {
        return Err(EmbeddingError::NeedsFile(kind));
    }
    let mut table = Array2::zeros((vocab.len(), dim));
    for (i, w) in vocab.words().iter().enumerate() {
        table.row_mut(i).assign(&word_vector(w, seed, dim));
    }
    Ok(RepresentationProvider { kind, dim, seed, source: Source::Table { vocab: vocab.clone(), table } })
}

impl RepresentationProvider {
    pub fn from_static(vocab: Vocabulary, table: Array2<f64>, seed: u64) -> Result<Self, EmbeddingError> {
        let dim = table.ncols();
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(RepresentationProvider { kind: ProviderKind::StaticFile, dim, seed, source: Source::Table { vocab, table } })
    }

    pub fn from_contextual(store: ContextualStore) -> Self {
        RepresentationProvider {
            kind: ProviderKind::ContextualFile,
            dim: store.dim(),
            seed: 0,
            source: Source::Contextual(store),
        }
    }

    pub fn kind(&self) -> ProviderKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trainable(&self) -> bool {
        self.kind == ProviderKind::OnehotLearned
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match &self.source {
            Source::Table { vocab, .. } => Some(vocab),
            Source::Contextual(_) => None,
        }
    }

    /// The per-type table (`None` for contextual providers).
    pub fn table(&self) -> Option<&Array2<f64>> {
        match &self.source {
            Source::Table { table, .. } => Some(table),
            Source::Contextual(_) => None,
        }
    }

    pub fn contextual_store(&self) -> Option<&ContextualStore> {
        match &self.source {
            Source::Contextual(s) => Some(s),
            Source::Table { .. } => None,
        }
    }

    /// Vector for a word type; out-of-vocabulary words get an on-the-spot
    /// keyed vector that never enters the table.
    pub fn word(&self, word: &str) -> Option<Array1<f64>> {
        match &self.source {
            Source::Table { vocab, table } => Some(match vocab.get(word) {
                Some(id) => table.row(id).to_owned(),
                None => word_vector(word, self.seed, self.dim),
            }),
            Source::Contextual(_) => None,
        }
    }

    /// `len × dim` matrix whose row `i` represents token `i`.
    pub fn embed_sentence(&self, sentence: &Sentence) -> Result<Array2<f64>, EmbeddingError> {
        match &self.source {
            Source::Table { .. } => {
                let mut out = Array2::zeros((sentence.len(), self.dim));
                for (i, tok) in sentence.tokens.iter().enumerate() {
                    out.row_mut(i).assign(&self.word(&tok.form).expect("table source"));
                }
                Ok(out)
            }
            Source::Contextual(store) => Ok(store.check(sentence)?.mapv(f64::from)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowId {
    Vocab(usize),
    Oov(usize),
}

/// Row lookup for one dataset under one provider.
///
/// Type-level providers resolve each token to a table row or to a
/// precomputed out-of-vocabulary vector; contextual providers read the store
/// directly. A trainable table may be overridden at gather time so training
/// can read its working copy.
pub struct FeatureView<'a> {
    provider: &'a RepresentationProvider,
    rows: Vec<Vec<RowId>>,
    oov: Array2<f64>,
}

impl<'a> FeatureView<'a> {
    pub fn new(provider: &'a RepresentationProvider, treebank: &Treebank) -> Result<Self, EmbeddingError> {
        match &provider.source {
            Source::Table { vocab, .. } => {
                let mut oov_ids: HashMap<&str, usize> = HashMap::new();
                let mut oov_words = Vec::new();
                let rows = treebank
                    .sentences
                    .iter()
                    .map(|s| {
                        s.tokens
                            .iter()
                            .map(|t| match vocab.get(&t.form) {
                                Some(id) => RowId::Vocab(id),
                                None => {
                                    let next = oov_ids.len();
                                    let id = *oov_ids.entry(t.form.as_str()).or_insert_with(|| {
                                        oov_words.push(t.form.as_str());
                                        next
                                    });
                                    RowId::Oov(id)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let mut oov = Array2::zeros((oov_words.len(), provider.dim));
                for (i, w) in oov_words.iter().enumerate() {
                    oov.row_mut(i).assign(&word_vector(w, provider.seed, provider.dim));
                }
                Ok(FeatureView { provider, rows, oov })
            }
            Source::Contextual(store) => {
                for s in &treebank.sentences {
                    store.check(s)?;
                }
                Ok(FeatureView { provider, rows: Vec::new(), oov: Array2::zeros((0, provider.dim)) })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.provider.dim
    }

    /// Copies the vector of token `index` of sentence `sent` into `out`.
    pub fn fill_row(&self, table: Option<&Array2<f64>>, sent: usize, index: usize, mut out: ArrayViewMut1<f64>) {
        match &self.provider.source {
            Source::Table { table: own, .. } => match self.rows[sent][index] {
                RowId::Vocab(id) => out.assign(&table.unwrap_or(own).row(id)),
                RowId::Oov(id) => out.assign(&self.oov.row(id)),
            },
            Source::Contextual(store) => {
                let m = &store.sentences[sent];
                out.iter_mut().zip(m.row(index)).for_each(|(o, &x)| *o = f64::from(x));
            }
        }
    }

    /// Table row backing a token, if the provider is type-level and the word is known.
    pub fn vocab_row(&self, sent: usize, index: usize) -> Option<usize> {
        match self.rows.get(sent).map(|r| r[index]) {
            Some(RowId::Vocab(id)) => Some(id),
            _ => None,
        }
    }

    pub fn sentence(&self, table: Option<&Array2<f64>>, sent: usize, len: usize) -> Array2<f64> {
        let mut out = Array2::zeros((len, self.dim()));
        for i in 0..len {
            self.fill_row(table, sent, i, out.row_mut(i));
        }
        out
    }

    /// Input width for a classification instance (`d` for tokens, `2d` for arcs).
    pub fn input_dim(&self, input: &InputRef) -> usize {
        match input {
            InputRef::Arc { .. } => 2 * self.dim(),
            _ => self.dim(),
        }
    }

    /// Fills one classifier input row: `h` for a token, `[h_head; h_tail]` for an arc.
    pub fn fill_input(&self, table: Option<&Array2<f64>>, input: &InputRef, mut out: ArrayViewMut1<f64>) {
        let d = self.dim();
        match *input {
            InputRef::Token { sent, index } => self.fill_row(table, sent, index, out),
            InputRef::Arc { sent, head, tail } => {
                self.fill_row(table, sent, head, out.slice_mut(ndarray::s![..d]));
                self.fill_row(table, sent, tail, out.slice_mut(ndarray::s![d..]));
            }
            InputRef::Sentence { .. } => panic!("sentence inputs are gathered with `sentence`"),
        }
    }

    /// Gathers the classifier input matrix for the given instances.
    pub fn gather(&self, table: Option<&Array2<f64>>, dataset: &TaskDataset, idx: &[usize]) -> Array2<f64> {
        let width = dataset.instances.first().map(|i| self.input_dim(&i.input)).unwrap_or(self.dim());
        let mut x = Array2::zeros((idx.len(), width));
        for (r, &i) in idx.iter().enumerate() {
            self.fill_input(table, &dataset.instances[i].input, x.row_mut(r));
        }
        x
    }
}

/// Loads either embedding format; `seed` keys out-of-vocabulary vectors for
/// static files.
pub fn load_embedding_file(path: impl AsRef<Path>, seed: u64) -> Result<RepresentationProvider, EmbeddingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| EmbeddingError::Io { path: path.display().to_string(), source })?;
    decode_embeddings(&bytes, seed)
}

pub fn decode_embeddings(bytes: &[u8], seed: u64) -> Result<RepresentationProvider, EmbeddingError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(7).map_err(|_| EmbeddingError::BadMagic)?;
    if magic == STATIC_MAGIC {
        let v = r.u32()? as usize;
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut words = Vec::with_capacity(v);
        let mut table = Array2::zeros((v, d));
        for i in 0..v {
            let len = r.u16()? as usize;
            let at = r.pos;
            let w = std::str::from_utf8(r.take(len)?).map_err(|_| EmbeddingError::Utf8 { offset: at })?;
            words.push(w.to_string());
            for j in 0..d {
                table[[i, j]] = f64::from(r.f32()?);
            }
        }
        r.finish()?;
        let vocab = Vocabulary::from_words(words.iter().map(String::as_str));
        RepresentationProvider::from_static(vocab, table, seed)
    } else if magic == CONTEXTUAL_MAGIC {
        let d = r.u32()? as usize;
        let s = r.u32()? as usize;
        if d == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut sentences: Vec<Option<Array2<f32>>> = vec![None; s];
        for _ in 0..s {
            let at = r.pos;
            let idx = r.u32()? as usize;
            let len = r.u32()? as usize;
            let mut m = Array2::zeros((len, d));
            for x in m.iter_mut() {
                *x = r.f32()?;
            }
            match sentences.get_mut(idx) {
                Some(slot @ None) => *slot = Some(m),
                _ => return Err(EmbeddingError::SentenceIndex { offset: at, index: idx }),
            }
        }
        r.finish()?;
        let sentences = sentences
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or(EmbeddingError::MissingSentence(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RepresentationProvider::from_contextual(ContextualStore::new(d, sentences)?))
    } else {
        Err(EmbeddingError::BadMagic)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(EmbeddingError::Truncated { offset: self.pos, needed: end - self.bytes.len() });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, EmbeddingError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, EmbeddingError> {
        let at = self.pos;
        let x = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        if !x.is_finite() {
            return Err(EmbeddingError::NonFinite { offset: at });
        }
        Ok(x)
    }

    fn finish(&self) -> Result<(), EmbeddingError> {
        if self.pos != self.bytes.len() {
            return Err(EmbeddingError::Trailing { offset: self.pos, extra: self.bytes.len() - self.pos });
        }
        Ok(())
    }
}

pub fn encode_static(words: &[String], table: &Array2<f32>) -> Vec<u8> {
    assert_eq!(words.len(), table.nrows());
    let mut out = Vec::new();
    out.extend_from_slice(STATIC_MAGIC);
    out.extend_from_slice(&(words.len() as u32).to_le_bytes());
    out.extend_from_slice(&(table.ncols() as u32).to_le_bytes());
    for (w, row) in words.iter().zip(table.rows()) {
        out.extend_from_slice(&(w.len() as u16).to_le_bytes());
        out.extend_from_slice(w.as_bytes());
        for x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn encode_contextual(store: &ContextualStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CONTEXTUAL_MAGIC);
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    out.extend_from_slice(&(store.sentences.len() as u32).to_le_bytes());
    for (i, m) in store.sentences.iter().enumerate() {
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
        for x in m.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let io = |source| EmbeddingError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}
