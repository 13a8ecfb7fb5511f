//! Posts, tokenization, vocabulary, encoding, splitting and the JSON-lines
//! dataset format.

mod synth;
mod tokenize;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synth::{synthesize_corpus, synthesize_treebank, SynthSentence, NEGATORS};
pub use tokenize::{detokenize, tokenize, Token};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus of {0} post(s) cannot be split into train and validation")]
    Unsplittable(usize),
    #[error("validation fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("{path}:{line}: {msg}")]
    Record {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("post {id}: explanation {text:?} is not a substring of the text")]
    ExplanationNotFound { id: String, text: String },
    #[error("post {id}: explanation given for a post labeled 0")]
    ExplanationOnNegative { id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenRange {
    pub start: usize,
    pub end: usize,
}

impl TokenRange {
    pub fn new(start: usize, end: usize) -> Self {
        TokenRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub raw: String,
    pub tokens: Vec<Token>,
    pub label: Option<bool>,
    pub gold_explanation: Option<TokenRange>,
}

impl Post {
    pub fn from_text(id: impl Into<String>, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        Post {
            id: id.into(),
            tokens: tokenize(&raw),
            raw,
            label: None,
            gold_explanation: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lowers(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.lower.as_str()).collect()
    }

    pub fn num_sentences(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.sent_index + 1)
    }

    /// Token ranges of each sentence, in order.
    pub fn sentence_ranges(&self) -> Vec<TokenRange> {
        let mut out: Vec<TokenRange> = Vec::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if out.len() == tok.sent_index + 1 {
                if let Some(r) = out.last_mut() {
                    r.end = i + 1;
                }
            } else {
                out.push(TokenRange::new(i, i + 1));
            }
        }
        out
    }

    /// Detokenized text of a token range.
    pub fn span_text(&self, range: TokenRange) -> String {
        let words: Vec<&str> = self.tokens[range.start..range.end]
            .iter()
            .map(|t| t.surface.as_str())
            .collect();
        detokenize(&words)
    }

    /// Verbatim raw text covered by a token range.
    pub fn raw_slice(&self, range: TokenRange) -> &str {
        if range.is_empty() {
            return "";
        }
        &self.raw[self.tokens[range.start].char_start..self.tokens[range.end - 1].char_end]
    }

    pub fn gold_text(&self) -> Option<String> {
        self.gold_explanation.map(|r| self.raw_slice(r).to_string())
    }
}

/// Fixed-length id sequence; positions past `true_length` are [`PAD`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPost {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

impl EncodedPost {
    /// The unpadded prefix.
    pub fn active(&self) -> &[usize] {
        &self.ids[..self.true_length]
    }
}

/// Maps lower forms to ids, truncating at `max_len` and padding with [`PAD`].
pub fn encode(post: &Post, vocab: &Vocabulary, max_len: usize) -> EncodedPost {
    encode_words(post.tokens.iter().map(|t| t.lower.as_str()), vocab, max_len)
}

pub fn encode_words<'a, I>(words: I, vocab: &Vocabulary, max_len: usize) -> EncodedPost
where
    I: IntoIterator<Item = &'a str>,
{
    let mut ids: Vec<usize> = words.into_iter().take(max_len).map(|w| vocab.id(w)).collect();
    let true_length = ids.len();
    ids.resize(max_len, PAD);
    EncodedPost { ids, true_length }
}

/// Inverse of [`encode`] over the unpadded positions.
pub fn decode<'v>(encoded: &EncodedPost, vocab: &'v Vocabulary) -> Vec<&'v str> {
    encoded
        .active()
        .iter()
        .map(|&id| vocab.token(id).unwrap_or(UNK_TOKEN))
        .collect()
}

/// Seeded shuffle-and-cut into `(train, validation)`.
///
/// The validation side gets `round(n * val_fraction)` items, clamped so both
/// sides are nonempty.
pub fn split<T>(items: Vec<T>, val_fraction: f64, rng_seed: u64) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(CorpusError::BadFraction(val_fraction));
    }
    let n = items.len();
    if n < 2 {
        return Err(CorpusError::Unsplittable(n));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n - n_val), Vec::with_capacity(n_val));
    for (item, v) in items.into_iter().zip(is_val) {
        if v {
            val.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, val))
}

/// One line of the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

impl DatasetRecord {
    /// Tokenizes the text and resolves the explanation to a token range.
    ///
    /// The explanation must occur verbatim in the text; when it occurs more
    /// than once the first occurrence is used.
    pub fn into_post(self) -> Result<Post, CorpusError> {
        let mut post = Post::from_text(self.id, self.text);
        post.label = self.label.map(|l| l != 0);
        if let Some(expl) = self.explanation {
            if post.label == Some(false) {
                return Err(CorpusError::ExplanationOnNegative { id: post.id });
            }
            let not_found = || CorpusError::ExplanationNotFound {
                id: post.id.clone(),
                text: expl.clone(),
            };
            let start = post.raw.find(expl.as_str()).ok_or_else(not_found)?;
            let end = start + expl.len();
            let first = post.tokens.iter().position(|t| t.char_end > start);
            let last = post.tokens.iter().rposition(|t| t.char_start < end);
            match (first, last) {
                (Some(a), Some(b)) if a <= b => {
                    post.gold_explanation = Some(TokenRange::new(a, b + 1));
                    post.label = Some(true);
                }
                _ => return Err(not_found()),
            }
        }
        Ok(post)
    }

    pub fn from_post(post: &Post) -> Self {
        DatasetRecord {
            id: post.id.clone(),
            text: post.raw.clone(),
            label: post.label.map(u8::from),
            explanation: post.gold_text(),
        }
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Post>, CorpusError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut posts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| CorpusError::Record {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if let Some(l) = record.label {
            if l > 1 {
                return Err(err(format!("label must be 0 or 1, got {l}")));
            }
        }
        posts.push(record.into_post()?);
    }
    Ok(posts)
}

pub fn write_dataset(path: impl AsRef<Path>, posts: &[Post]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for post in posts {
        let line = serde_json::to_string(&DatasetRecord::from_post(post)).expect("record serializes");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
