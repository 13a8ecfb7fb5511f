use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Post;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lower-cased word types with frequency-ordered indices.
///
/// Indices 0 and 1 are reserved for padding and unknown words. Corpus tokens
/// start at 2 and are ordered by descending frequency, ties broken
/// lexicographically. The reserved names are not in the lookup map, so a
/// corpus token spelled `<pad>` gets an ordinary index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    counts: Vec<usize>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.tokens, r.counts)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// A vocabulary holding only the reserved entries.
    pub fn empty() -> Self {
        Vocabulary::from_parts(
            vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            vec![0, 0],
        )
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<usize>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            counts,
            index,
        }
    }

    /// Builds a vocabulary from corpus words with their counts.
    pub fn from_counts<I>(counts: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = (String, usize)>,
    {
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut freq = vec![0, 0];
        for (t, c) in kept {
            tokens.push(t);
            freq.push(c);
        }
        Vocabulary::from_parts(tokens, freq)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Index of a lower-cased word, `None` when out of vocabulary.
    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index of a lower-cased word, falling back to [`UNK`].
    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> usize {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// FNV-1a over all entries joined by newlines.
    pub fn content_hash(&self) -> u64 {
        crate::hash::fnv1a(self.tokens.join("\n").as_bytes())
    }
}

/// Counts the lower forms of every post and keeps those seen `min_count` times.
pub fn build_vocab(posts: &[Post], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for post in posts {
        for tok in &post.tokens {
            *counts.entry(tok.lower.clone()).or_default() += 1;
        }
    }
    Vocabulary::from_counts(counts, min_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(text: &str) -> Post {
        Post::from_text("p", text)
    }

    #[test]
    fn min_count_threshold() {
        let v = build_vocab(&[post("a a b")], 2);
        assert!(v.get("a").is_some());
        assert!(v.get("b").is_none());
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let v = build_vocab(&[post("a b"), post("b")], 1);
        assert_eq!(v.get("b"), Some(2));
        assert_eq!(v.get("a"), Some(3));
        let v = build_vocab(&[post("z y x")], 1);
        assert_eq!(v.tokens()[2..], ["x", "y", "z"]);
    }

    #[test]
    fn empty_corpus_has_reserved_entries_only() {
        let v = build_vocab(&[], 1);
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(PAD), Some(PAD_TOKEN));
        assert_eq!(v.token(UNK), Some(UNK_TOKEN));
    }

    #[test]
    fn reserved_names_do_not_collide() {
        let v = build_vocab(&[post("<pad> <unk>")], 1);
        // "<", "pad", ">" are separate tokens under the rule tokenizer
        assert!(v.get("pad").unwrap() >= 2);
        let v = Vocabulary::from_counts(vec![("<pad>".to_string(), 3)], 1);
        assert_eq!(v.get("<pad>"), Some(2));
        assert_eq!(v.id("<unk>"), UNK);
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let v = build_vocab(&[post("the cat sat on the mat")], 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.get("the"), Some(2));
        assert_eq!(back.content_hash(), v.content_hash());
    }
}
