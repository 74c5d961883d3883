//! CoNLL-U treebanks and the probing datasets derived from them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

// Independent RNG streams so that label and input shuffles with the same seed
// never apply the same permutation.
const LABEL_STREAM: u64 = 1;
const INPUT_STREAM: u64 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: invalid token id `{value}`")]
    TokenId { line: usize, value: String },
    #[error("line {line}: token id {found} breaks the sequence (expected {expected})")]
    NonContiguous { line: usize, expected: usize, found: usize },
    #[error("line {line}: empty FORM")]
    EmptyForm { line: usize },
    #[error("line {line}: HEAD `{value}` is not an integer")]
    Head { line: usize, value: String },
    #[error("line {line}: HEAD {head} out of range for a sentence of {len} tokens")]
    HeadRange { line: usize, head: usize, len: usize },
    #[error("line {line}: token {index} is its own head")]
    SelfHead { line: usize, index: usize },
    #[error("unknown task kind `{0}` (expected posl, dal or parse)")]
    UnknownTask(String),
    #[error("unknown split `{0}` (expected train, dev or test)")]
    UnknownSplit(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub upos: String,
    /// 1-based index of the head token; 0 is the artificial root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Ordinal of the sentence within its file, starting at 0.
    pub sent_index: usize,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(CorpusError::UnknownSplit(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Treebank {
    pub split: Split,
    pub language: String,
    pub sentences: Vec<Sentence>,
}

impl Treebank {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flat_map(|s| s.tokens.iter().map(|t| t.form.as_str()))
    }
}

/// Parses CoNLL-U text into a treebank split.
///
/// Comment lines, multiword ranges (`3-4`) and empty nodes (`5.1`) are
/// skipped; only the basic dependency layer is kept.
pub fn parse_conllu(text: &str, split: Split, language: &str) -> Result<Treebank, CorpusError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut token_lines: Vec<usize> = Vec::new();

    let finish = |tokens: &mut Vec<Token>,
                  token_lines: &mut Vec<usize>,
                  sentences: &mut Vec<Sentence>|
     -> Result<(), CorpusError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let len = tokens.len();
        for (i, (tok, &line)) in tokens.iter().zip(token_lines.iter()).enumerate() {
            if tok.head > len {
                return Err(CorpusError::HeadRange { line, head: tok.head, len });
            }
            if tok.head == i + 1 {
                return Err(CorpusError::SelfHead { line, index: i + 1 });
            }
        }
        sentences.push(Sentence { tokens: std::mem::take(tokens), sent_index: sentences.len() });
        token_lines.clear();
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut token_lines, &mut sentences)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Columns { line: line_no, found: cols.len() });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.parse().map_err(|_| CorpusError::TokenId { line: line_no, value: cols[0].to_string() })?;
        if id != tokens.len() + 1 {
            return Err(CorpusError::NonContiguous { line: line_no, expected: tokens.len() + 1, found: id });
        }
        if cols[1].is_empty() {
            return Err(CorpusError::EmptyForm { line: line_no });
        }
        let head: usize =
            cols[6].parse().map_err(|_| CorpusError::Head { line: line_no, value: cols[6].to_string() })?;
        tokens.push(Token { form: cols[1].to_string(), upos: cols[3].to_string(), head, deprel: cols[7].to_string() });
        token_lines.push(line_no);
    }
    finish(&mut tokens, &mut token_lines, &mut sentences)?;

    Ok(Treebank { split, language: language.to_string(), sentences })
}

/// Serializes the fields this crate tracks back to CoNLL-U; unused columns are `_`.
pub fn write_conllu(treebank: &Treebank) -> String {
    let mut out = String::new();
    for sentence in &treebank.sentences {
        for (i, tok) in sentence.tokens.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                tok.form,
                tok.upos,
                tok.head,
                tok.deprel
            ));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Posl,
    Dal,
    Parse,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Posl => "posl",
            TaskKind::Dal => "dal",
            TaskKind::Parse => "parse",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "posl" => Ok(TaskKind::Posl),
            "dal" => Ok(TaskKind::Dal),
            "parse" | "parsing" => Ok(TaskKind::Parse),
            _ => Err(CorpusError::UnknownTask(s.to_string())),
        }
    }
}

/// Where an instance's input lives in its treebank. Token positions are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputRef {
    Token { sent: usize, index: usize },
    Arc { sent: usize, head: usize, tail: usize },
    Sentence { sent: usize },
}

impl InputRef {
    pub fn sent(&self) -> usize {
        match *self {
            InputRef::Token { sent, .. } | InputRef::Arc { sent, .. } | InputRef::Sentence { sent } => sent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// Index into the dataset's label set; `None` for a label unseen in train.
    Label(Option<usize>),
    /// Gold head per token (1-based, 0 = root).
    Heads(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub input: InputRef,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub task: TaskKind,
    pub treebank: Arc<Treebank>,
    pub instances: Vec<Instance>,
    /// Sorted label inventory taken from the train split (empty for parsing).
    pub labels: Vec<String>,
}

/// Extracts a task dataset whose label inventory comes from `treebank` itself.
/// Use this on the train split.
pub fn extract_task(treebank: Arc<Treebank>, task: TaskKind) -> TaskDataset {
    let labels = label_inventory(&treebank, task);
    extract_task_with_labels(treebank, task, &labels)
}

/// Extracts a dev/test dataset against a train-split label inventory.
/// Unseen labels become `Target::Label(None)` and always count as errors.
pub fn extract_task_with_labels(treebank: Arc<Treebank>, task: TaskKind, labels: &[String]) -> TaskDataset {
    let lookup = |l: &str| labels.binary_search_by(|x| x.as_str().cmp(l)).ok();
    let mut instances = Vec::new();
    for (sent, sentence) in treebank.sentences.iter().enumerate() {
        match task {
            TaskKind::Posl => {
                for (index, tok) in sentence.tokens.iter().enumerate() {
                    instances.push(Instance {
                        input: InputRef::Token { sent, index },
                        target: Target::Label(lookup(&tok.upos)),
                    });
                }
            }
            TaskKind::Dal => {
                for (tail, tok) in sentence.tokens.iter().enumerate() {
                    if tok.head == 0 {
                        continue;
                    }
                    instances.push(Instance {
                        input: InputRef::Arc { sent, head: tok.head - 1, tail },
                        target: Target::Label(lookup(&tok.deprel)),
                    });
                }
            }
            TaskKind::Parse => {
                instances.push(Instance { input: InputRef::Sentence { sent }, target: Target::Heads(sentence.heads()) })
            }
        }
    }
    TaskDataset { task, treebank, instances, labels: labels.to_vec() }
}

pub fn label_inventory(treebank: &Treebank, task: TaskKind) -> Vec<String> {
    let mut set = BTreeSet::new();
    for sentence in &treebank.sentences {
        for tok in &sentence.tokens {
            match task {
                TaskKind::Posl => {
                    set.insert(tok.upos.clone());
                }
                TaskKind::Dal if tok.head != 0 => {
                    set.insert(tok.deprel.clone());
                }
                _ => {}
            }
        }
    }
    set.into_iter().collect()
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Label ids for classification tasks (`None` for unseen labels).
    pub fn label_targets(&self) -> Vec<Option<usize>> {
        self.instances
            .iter()
            .map(|inst| match inst.target {
                Target::Label(l) => l,
                Target::Heads(_) => None,
            })
            .collect()
    }

    /// Number of scored units: instances for POSL/DAL, tokens for parsing.
    pub fn num_scored(&self) -> usize {
        match self.task {
            TaskKind::Parse => self
                .instances
                .iter()
                .map(|i| match &i.target {
                    Target::Heads(h) => h.len(),
                    Target::Label(_) => 0,
                })
                .sum(),
            _ => self.len(),
        }
    }

    /// Label-shuffled copy. POSL/DAL targets are permuted across all tokens;
    /// parsing heads are permuted within each sentence.
    ///
    /// Head permutations are drawn uniformly among those that leave no token
    /// as its own head, since the parser masks self-attachment.
    pub fn shuffle_labels(&self, seed: u64) -> TaskDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(LABEL_STREAM);
        let mut out = self.clone();
        match self.task {
            TaskKind::Posl | TaskKind::Dal => {
                let mut targets: Vec<Target> = self.instances.iter().map(|i| i.target.clone()).collect();
                targets.shuffle(&mut rng);
                for (inst, t) in out.instances.iter_mut().zip(targets) {
                    inst.target = t;
                }
            }
            TaskKind::Parse => {
                for inst in &mut out.instances {
                    if let Target::Heads(heads) = &mut inst.target {
                        permute_heads(heads, &mut rng);
                    }
                }
            }
        }
        out
    }

    /// Input-shuffled copy: every token form in the corpus is permuted
    /// globally while sentence lengths and boundaries are kept.
    pub fn shuffle_inputs(&self, seed: u64) -> TaskDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INPUT_STREAM);
        let mut forms: Vec<String> = self.treebank.forms().map(str::to_string).collect();
        forms.shuffle(&mut rng);
        let mut treebank = (*self.treebank).clone();
        let mut it = forms.into_iter();
        for sentence in &mut treebank.sentences {
            for tok in &mut sentence.tokens {
                tok.form = it.next().expect("form count preserved");
            }
        }
        TaskDataset { treebank: Arc::new(treebank), ..self.clone() }
    }

    /// Both labels and inputs shuffled.
    pub fn shuffle_fully(&self, seed: u64) -> TaskDataset {
        self.shuffle_labels(seed).shuffle_inputs(seed)
    }

    /// Writes the dataset's view of the treebank, with targets substituted
    /// into the UPOS / DEPREL / HEAD column that the task reads.
    pub fn to_treebank(&self) -> Treebank {
        let mut tb = (*self.treebank).clone();
        for inst in &self.instances {
            match (&inst.input, &inst.target) {
                (InputRef::Token { sent, index }, Target::Label(l)) => {
                    tb.sentences[*sent].tokens[*index].upos = label_name(&self.labels, *l);
                }
                (InputRef::Arc { sent, tail, .. }, Target::Label(l)) => {
                    tb.sentences[*sent].tokens[*tail].deprel = label_name(&self.labels, *l);
                }
                (InputRef::Sentence { sent }, Target::Heads(h)) => {
                    for (tok, &head) in tb.sentences[*sent].tokens.iter_mut().zip(h) {
                        tok.head = head;
                    }
                }
                _ => {}
            }
        }
        tb
    }
}

fn label_name(labels: &[String], id: Option<usize>) -> String {
    id.and_then(|i| labels.get(i)).cloned().unwrap_or_else(|| "_".to_string())
}

fn permute_heads(heads: &mut [usize], rng: &mut ChaCha8Rng) {
    let original = heads.to_vec();
    let valid = |h: &[usize]| h.iter().enumerate().all(|(i, &x)| x != i + 1);
    // Rejection sampling: a valid arrangement always exists for a tree's head
    // multiset, and about 1/e of uniform permutations are accepted.
    loop {
        heads.copy_from_slice(&original);
        heads.shuffle(rng);
        if valid(heads) {
            return;
        }
    }
}
