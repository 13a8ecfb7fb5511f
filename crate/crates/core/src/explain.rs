//! Turning seeds into one contiguous explanation span.
//!
//! The sentence holding most seeds is chosen; within its dependency tree
//! the seed closest to the root is located, lifted once to its head when it
//! is neither a verb nor the sentence root, and the subtree under the
//! resulting node is the explanation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Post, TokenRange};
use crate::depparse::{DepParseError, DepParser, DepTree, TreeError};
use crate::nn::NnError;
use crate::seeds::{Detector, Mechanism, SeedError, SeedSet, Seeder};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("no seeds to explain from; use the fallback explanation")]
    NoSeeds,
    #[error("post has {expected} sentence(s) but {found} tree(s) were given")]
    TreeCount { expected: usize, found: usize },
    #[error("sentence {sentence} has {expected} token(s) but its tree has {found}")]
    TreeLength { sentence: usize, expected: usize, found: usize },
    #[error("sentence {sentence}: {source}")]
    Tree { sentence: usize, source: TreeError },
    #[error("seed position {position} is outside a post of {len} token(s)")]
    SeedOutOfRange { position: usize, len: usize },
    #[error("cannot explain an empty post")]
    EmptyPost,
    #[error(transparent)]
    Detector(#[from] NnError),
    #[error(transparent)]
    Seeds(#[from] SeedError),
    #[error(transparent)]
    Parse(#[from] DepParseError),
}

/// How the starting node is picked among the seeds of the chosen sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighestSeed {
    /// Minimum depth from the root; score, then position break ties.
    #[default]
    Shallowest,
    /// Maximum seed score; depth, then position break ties.
    TopScore,
}

impl std::str::FromStr for HighestSeed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shallowest" => Ok(HighestSeed::Shallowest),
            "top_score" => Ok(HighestSeed::TopScore),
            other => Err(format!("unknown seed policy {other:?} (expected shallowest or top_score)")),
        }
    }
}

impl std::fmt::Display for HighestSeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HighestSeed::Shallowest => "shallowest",
            HighestSeed::TopScore => "top_score",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSpan {
    pub sentence_index: usize,
    /// Post token coordinates.
    pub range: TokenRange,
    pub text: String,
    /// Post token index of the node whose subtree was emitted.
    pub chosen_node: usize,
    pub promoted: bool,
    pub fallback: bool,
}

pub fn is_verb(upos: &str) -> bool {
    upos == "VERB" || upos == "AUX"
}

/// Sentence with the most seeds; ties go to the sentence whose best seed
/// scores highest, then to the earliest.
fn select_sentence(seeds: &SeedSet, sentence_of: &[usize], num_sentences: usize) -> usize {
    let mut count = vec![0usize; num_sentences];
    let mut best = vec![f64::NEG_INFINITY; num_sentences];
    for s in &seeds.seeds {
        let i = sentence_of[s.position];
        count[i] += 1;
        best[i] = best[i].max(s.score);
    }
    let mut pick = 0;
    for i in 1..num_sentences {
        if count[i] > count[pick] || (count[i] == count[pick] && best[i] > best[pick]) {
            pick = i;
        }
    }
    pick
}

/// Explains with the default shallowest-seed policy.
pub fn generate_explanation(post: &Post, seeds: &SeedSet, trees: &[DepTree]) -> Result<ExplanationSpan, ExplainError> {
    generate_explanation_with(post, seeds, trees, HighestSeed::default())
}

/// `trees` holds one tree per sentence of `post`, in sentence-local
/// coordinates. Only the chosen sentence's tree must be projective.
pub fn generate_explanation_with(
    post: &Post,
    seeds: &SeedSet,
    trees: &[DepTree],
    policy: HighestSeed,
) -> Result<ExplanationSpan, ExplainError> {
    if seeds.is_empty() {
        return Err(ExplainError::NoSeeds);
    }
    let sentences = post.sentence_ranges();
    if trees.len() != sentences.len() {
        return Err(ExplainError::TreeCount {
            expected: sentences.len(),
            found: trees.len(),
        });
    }
    if let Some(s) = seeds.seeds.iter().find(|s| s.position >= post.len()) {
        return Err(ExplainError::SeedOutOfRange {
            position: s.position,
            len: post.len(),
        });
    }
    let sentence_of: Vec<usize> = post.tokens.iter().map(|t| t.sent_index).collect();
    let si = select_sentence(seeds, &sentence_of, sentences.len());
    let range = sentences[si];
    let tree = &trees[si];
    if tree.len() != range.len() {
        return Err(ExplainError::TreeLength {
            sentence: si,
            expected: range.len(),
            found: tree.len(),
        });
    }
    tree.validate_projective().map_err(|source| ExplainError::Tree { sentence: si, source })?;
    let depth = tree.depths().expect("validated tree");

    let candidates = seeds.seeds.iter().filter(|s| range.contains(s.position)).map(|s| (s.position - range.start, s.score));
    let key = |&(node, score): &(usize, f64)| (depth[node], score, node);
    let (start, _) = candidates
        .min_by(|a, b| {
            let ((da, sa, pa), (db, sb, pb)) = (key(a), key(b));
            match policy {
                HighestSeed::Shallowest => da.cmp(&db).then(sb.total_cmp(&sa)).then(pa.cmp(&pb)),
                HighestSeed::TopScore => sb.total_cmp(&sa).then(da.cmp(&db)).then(pa.cmp(&pb)),
            }
        })
        .expect("the chosen sentence holds a seed");

    let (node, promoted) = match tree.heads[start] {
        Some(head) if !is_verb(&tree.upos[start]) => (head, true),
        _ => (start, false),
    };
    let local = tree.subtree_span(node);
    let span = TokenRange::new(range.start + local.start, range.start + local.end);
    Ok(ExplanationSpan {
        sentence_index: si,
        range: span,
        text: post.span_text(span),
        chosen_node: range.start + node,
        promoted,
        fallback: false,
    })
}

/// Whole sentence carrying the most evidence mass (attention weights or
/// positive coefficients), earliest on ties. Models without per-token
/// evidence get the first sentence.
pub fn fallback_explanation(post: &Post, detector: &Detector) -> Result<ExplanationSpan, ExplainError> {
    let evidence = if post.is_empty() { None } else { detector.token_evidence(&post.lowers())? };
    fallback_from_evidence(post, evidence.as_deref())
}

/// [`fallback_explanation`] over precomputed per-token evidence.
pub fn fallback_from_evidence(post: &Post, evidence: Option<&[f64]>) -> Result<ExplanationSpan, ExplainError> {
    if post.is_empty() {
        return Err(ExplainError::EmptyPost);
    }
    let at = |i: usize| evidence.and_then(|e| e.get(i)).copied().unwrap_or(0.0);
    let sentences = post.sentence_ranges();
    let mass: Vec<f64> = sentences.iter().map(|r| (r.start..r.end).map(at).sum()).collect();
    let mut si = 0;
    for i in 1..mass.len() {
        if mass[i] > mass[si] {
            si = i;
        }
    }
    let range = sentences[si];
    let mut node = range.start;
    for i in range.start..range.end {
        if at(i) > at(node) {
            node = i;
        }
    }
    Ok(ExplanationSpan {
        sentence_index: si,
        range,
        text: post.span_text(range),
        chosen_node: node,
        promoted: false,
        fallback: true,
    })
}

/// Parses every sentence of `post` from its surface tokens.
pub fn parse_post(parser: &DepParser, post: &Post) -> Result<Vec<DepTree>, DepParseError> {
    post.sentence_ranges()
        .into_iter()
        .map(|r| {
            let words: Vec<&str> = post.tokens[r.start..r.end].iter().map(|t| t.surface.as_str()).collect();
            parser.parse(&words)
        })
        .collect()
}

/// One line of explanation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub id: String,
    pub label_prob: f64,
    pub predicted_label: u8,
    pub explanation_text: Option<String>,
    pub token_start: Option<usize>,
    pub token_end: Option<usize>,
    pub sentence_index: Option<usize>,
    pub mechanism: String,
    pub fallback: bool,
}

impl ExplanationRecord {
    pub fn with_span(id: &str, label_prob: f64, mechanism: Mechanism, span: &ExplanationSpan) -> Self {
        ExplanationRecord {
            id: id.to_string(),
            label_prob,
            predicted_label: 1,
            explanation_text: Some(span.text.clone()),
            token_start: Some(span.range.start),
            token_end: Some(span.range.end),
            sentence_index: Some(span.sentence_index),
            mechanism: mechanism.to_string(),
            fallback: span.fallback,
        }
    }

    pub fn below_threshold(id: &str, label_prob: f64, mechanism: Mechanism) -> Self {
        ExplanationRecord {
            id: id.to_string(),
            label_prob,
            predicted_label: 0,
            explanation_text: None,
            token_start: None,
            token_end: None,
            sentence_index: None,
            mechanism: mechanism.to_string(),
            fallback: false,
        }
    }
}

/// Detector, seed function and parser wired together.
pub struct Explainer<'a> {
    pub seeder: Seeder<'a>,
    pub parser: &'a DepParser,
    pub k: usize,
    pub threshold: f64,
    pub policy: HighestSeed,
}

impl Explainer<'_> {
    /// Posts scoring below the threshold get a record without a span;
    /// positive posts without usable seeds get the fallback sentence.
    pub fn explain(&self, post: &Post) -> Result<ExplanationRecord, ExplainError> {
        let detector = self.seeder.detector;
        let words = post.lowers();
        let p = detector.probability(&words)?;
        let mechanism = self.seeder.mechanism;
        if p < self.threshold || post.is_empty() {
            return Ok(ExplanationRecord::below_threshold(&post.id, p, mechanism));
        }
        let seeds = self.seeder.seed_words(&words, self.k)?;
        let span = if seeds.is_empty() {
            fallback_explanation(post, detector)?
        } else {
            let trees = parse_post(self.parser, post)?;
            generate_explanation_with(post, &seeds, &trees, self.policy)?
        };
        Ok(ExplanationRecord::with_span(&post.id, p, mechanism, &span))
    }
}
