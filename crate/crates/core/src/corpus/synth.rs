//! Template grammar for synthetic posts and matching gold dependency trees.
//!
//! Every post is a sequence of clauses grouped into sentences. Background
//! clauses come from a neutral pool; crisis posts carry one trigger clause
//! built from invented trigger words. A fifth of the negative posts carry a
//! negated trigger clause ("never" / "not" before the trigger), and about a
//! third of background clauses are negated as well, so negation words alone
//! say nothing about the label: only their position relative to the trigger
//! does.
//!
//! A sentence holds one clause, or two clauses joined by "and"/"but". Each
//! clause template carries coarse tags and heads, so the same grammar also
//! emits a gold treebank for training the built-in tagger and parser.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{detokenize, Post, TokenRange};

pub const NEGATORS: [&str; 2] = ["not", "never"];

const SUBJECTS: &[&str] = &["i", "we", "they", "you", "she", "he"];
const DETS: &[&str] = &["the", "a", "my", "our"];
const NOUNS: &[&str] = &[
    "garden", "bread", "movie", "window", "letter", "bus", "song", "game", "book", "river", "coffee",
    "class", "dog", "park", "phone", "dinner",
];
const VERBS_PAST: &[&str] = &[
    "watched", "cooked", "painted", "read", "found", "opened", "cleaned", "visited", "fixed", "liked",
];
const VERBS_BASE: &[&str] = &[
    "watch", "cook", "paint", "read", "find", "open", "clean", "visit", "fix", "like",
];
const VERBS_INTRANS: &[&str] = &["walked", "slept", "laughed", "waited", "talked", "smiled", "arrived"];
const ADVERBS: &[&str] = &["again", "today", "yesterday", "slowly", "outside", "later"];
const ADJECTIVES: &[&str] = &["sunny", "quiet", "cold", "busy", "late", "fine", "green"];
const PREPS: &[&str] = &["to", "near", "after", "with", "into"];
const DO_FORMS: &[&str] = &["did", "do"];
const CONJUNCTIONS: &[&str] = &["and", "but"];

const TRIGGER_PAST: &[&str] = &["zorped", "skelfed", "vrasked", "plindered"];
const TRIGGER_BASE: &[&str] = &["zorp", "skelf", "vrask", "plinder"];
const TRIGGER_NOUNS: &[&str] = &["grimsh", "blorple", "vexity"];

#[derive(Clone, Copy)]
enum Slot {
    Word(&'static str),
    Pool(&'static [&'static str]),
}

/// A clause template: `(slot, tag, head)` where `head` indexes the clause and
/// `-1` marks the clause root.
type Template = &'static [(Slot, &'static str, i8)];

use Slot::{Pool, Word};

const BACKGROUND: &[Template] = &[
    // i watched the movie
    &[(Pool(SUBJECTS), "PRON", 1), (Pool(VERBS_PAST), "VERB", -1), (Pool(DETS), "DET", 3), (Pool(NOUNS), "NOUN", 1)],
    // the dog walked to the park
    &[
        (Pool(DETS), "DET", 1),
        (Pool(NOUNS), "NOUN", 2),
        (Pool(VERBS_INTRANS), "VERB", -1),
        (Pool(PREPS), "ADP", 5),
        (Pool(DETS), "DET", 5),
        (Pool(NOUNS), "NOUN", 2),
    ],
    // the garden was quiet
    &[(Pool(DETS), "DET", 1), (Pool(NOUNS), "NOUN", 3), (Word("was"), "AUX", 3), (Pool(ADJECTIVES), "ADJ", -1)],
    // we talked again
    &[(Pool(SUBJECTS), "PRON", 1), (Pool(VERBS_INTRANS), "VERB", -1), (Pool(ADVERBS), "ADV", 1)],
    // i did not cook the dinner
    &[
        (Pool(SUBJECTS), "PRON", 3),
        (Pool(DO_FORMS), "AUX", 3),
        (Word("not"), "PART", 3),
        (Pool(VERBS_BASE), "VERB", -1),
        (Pool(DETS), "DET", 5),
        (Pool(NOUNS), "NOUN", 3),
    ],
    // they never liked the song
    &[
        (Pool(SUBJECTS), "PRON", 2),
        (Word("never"), "ADV", 2),
        (Pool(VERBS_PAST), "VERB", -1),
        (Pool(DETS), "DET", 4),
        (Pool(NOUNS), "NOUN", 2),
    ],
    // we want to visit the river
    &[
        (Pool(SUBJECTS), "PRON", 1),
        (Word("want"), "VERB", -1),
        (Word("to"), "PART", 3),
        (Pool(VERBS_BASE), "VERB", 1),
        (Pool(DETS), "DET", 5),
        (Pool(NOUNS), "NOUN", 3),
    ],
    // she thinks about the book
    &[
        (Pool(SUBJECTS), "PRON", 1),
        (Word("think"), "VERB", -1),
        (Word("about"), "ADP", 4),
        (Pool(DETS), "DET", 4),
        (Pool(NOUNS), "NOUN", 1),
    ],
];

const TRIGGERS: &[Template] = &[
    // i zorped myself
    &[(Word("i"), "PRON", 1), (Pool(TRIGGER_PAST), "VERB", -1), (Word("myself"), "PRON", 1)],
    // i want to zorp myself
    &[
        (Word("i"), "PRON", 1),
        (Word("want"), "VERB", -1),
        (Word("to"), "PART", 3),
        (Pool(TRIGGER_BASE), "VERB", 1),
        (Word("myself"), "PRON", 3),
    ],
    // i think about grimsh
    &[(Word("i"), "PRON", 1), (Word("think"), "VERB", -1), (Word("about"), "ADP", 3), (Pool(TRIGGER_NOUNS), "NOUN", 1)],
    // grimsh
    &[(Pool(TRIGGER_NOUNS), "NOUN", -1)],
];

/// Negated counterpart of each trigger template, index-aligned.
const NEGATED_TRIGGERS: &[Template] = &[
    // i never zorped myself
    &[(Word("i"), "PRON", 2), (Word("never"), "ADV", 2), (Pool(TRIGGER_PAST), "VERB", -1), (Word("myself"), "PRON", 2)],
    // i do not want to zorp myself
    &[
        (Word("i"), "PRON", 3),
        (Pool(DO_FORMS), "AUX", 3),
        (Word("not"), "PART", 3),
        (Word("want"), "VERB", -1),
        (Word("to"), "PART", 5),
        (Pool(TRIGGER_BASE), "VERB", 3),
        (Word("myself"), "PRON", 5),
    ],
    // i never think about grimsh
    &[
        (Word("i"), "PRON", 2),
        (Word("never"), "ADV", 2),
        (Word("think"), "VERB", -1),
        (Word("about"), "ADP", 4),
        (Pool(TRIGGER_NOUNS), "NOUN", 2),
    ],
    // never grimsh
    &[(Word("never"), "ADV", 1), (Pool(TRIGGER_NOUNS), "NOUN", -1)],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClauseKind {
    Background,
    Trigger,
    NegatedTrigger,
}

struct Clause {
    words: Vec<String>,
    upos: Vec<&'static str>,
    heads: Vec<Option<usize>>,
    root: usize,
    kind: ClauseKind,
}

fn realize(template: Template, kind: ClauseKind, rng: &mut ChaCha8Rng) -> Clause {
    let mut words = Vec::with_capacity(template.len());
    let mut upos = Vec::with_capacity(template.len());
    let mut heads = Vec::with_capacity(template.len());
    let mut root = 0;
    for (i, &(slot, tag, head)) in template.iter().enumerate() {
        let word = match slot {
            Word(w) => w,
            Pool(pool) => pool.choose(rng).expect("nonempty pool"),
        };
        words.push(word.to_string());
        upos.push(tag);
        if head < 0 {
            root = i;
            heads.push(None);
        } else {
            heads.push(Some(head as usize));
        }
    }
    Clause {
        words,
        upos,
        heads,
        root,
        kind,
    }
}

fn clause(kind: ClauseKind, rng: &mut ChaCha8Rng) -> Clause {
    let template = match kind {
        ClauseKind::Background => *BACKGROUND.choose(rng).expect("templates"),
        ClauseKind::Trigger => TRIGGERS[rng.gen_range(0..TRIGGERS.len())],
        ClauseKind::NegatedTrigger => NEGATED_TRIGGERS[rng.gen_range(0..NEGATED_TRIGGERS.len())],
    };
    realize(template, kind, rng)
}

/// One generated sentence with gold tags and heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSentence {
    pub words: Vec<String>,
    pub upos: Vec<String>,
    /// Head index within the sentence; `None` for the root.
    pub heads: Vec<Option<usize>>,
    /// Token range of a trigger clause, when the sentence has one.
    pub trigger: Option<TokenRange>,
}

fn assemble(clauses: Vec<Clause>, rng: &mut ChaCha8Rng) -> SynthSentence {
    let mut words = Vec::new();
    let mut upos = Vec::new();
    let mut heads = Vec::new();
    let mut trigger = None;
    let mut first_root = 0;
    for (ci, c) in clauses.into_iter().enumerate() {
        let offset = words.len();
        let clause_start;
        if ci == 0 {
            first_root = offset + c.root;
            clause_start = offset;
        } else {
            words.push(CONJUNCTIONS.choose(rng).expect("conjunctions").to_string());
            upos.push("CCONJ".to_string());
            heads.push(Some(offset + 1 + c.root));
            clause_start = offset + 1;
        }
        let n = c.words.len();
        for (i, (w, (t, h))) in c.words.into_iter().zip(c.upos.into_iter().zip(c.heads)).enumerate() {
            words.push(w);
            upos.push(t.to_string());
            heads.push(match h {
                Some(h) => Some(clause_start + h),
                None if ci == 0 => None,
                None => {
                    debug_assert_eq!(i, c.root);
                    Some(first_root)
                }
            });
        }
        if c.kind == ClauseKind::Trigger {
            trigger = Some(TokenRange::new(clause_start, clause_start + n));
        }
    }
    words.push(".".to_string());
    upos.push("PUNCT".to_string());
    heads.push(Some(first_root));
    SynthSentence {
        words,
        upos,
        heads,
        trigger,
    }
}

/// Groups clauses into sentences of one or two clauses.
fn group(clauses: Vec<Clause>, rng: &mut ChaCha8Rng) -> Vec<SynthSentence> {
    let mut sentences: Vec<Vec<Clause>> = Vec::new();
    for c in clauses {
        match sentences.last_mut() {
            Some(s) if s.len() == 1 && rng.gen_bool(0.3) => s.push(c),
            _ => sentences.push(vec![c]),
        }
    }
    sentences.into_iter().map(|s| assemble(s, rng)).collect()
}

fn post_from_sentences(id: String, sentences: &[SynthSentence], label: bool) -> Post {
    let mut raw = String::new();
    let mut gold = None;
    let mut offset = 0;
    for s in sentences {
        if !raw.is_empty() {
            raw.push(' ');
        }
        raw.push_str(&detokenize(&s.words));
        if let Some(t) = s.trigger {
            gold = Some(TokenRange::new(offset + t.start, offset + t.end));
        }
        offset += s.words.len();
    }
    let mut post = Post::from_text(id, raw);
    debug_assert_eq!(post.len(), offset);
    post.label = Some(label);
    post.gold_explanation = gold;
    post
}

/// Generates `n` labeled posts; each is a crisis post with probability
/// `crisis_rate` and then carries a gold explanation over its trigger clause.
pub fn synthesize_corpus(n: usize, crisis_rate: f64, rng_seed: u64) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|i| {
            let positive = rng.gen_bool(crisis_rate.clamp(0.0, 1.0));
            let n_background = rng.gen_range(1..=5);
            let mut kinds = vec![ClauseKind::Background; n_background];
            let extra = if positive {
                Some(ClauseKind::Trigger)
            } else if rng.gen_bool(0.2) {
                Some(ClauseKind::NegatedTrigger)
            } else {
                None
            };
            if let Some(k) = extra {
                let at = rng.gen_range(0..=n_background);
                kinds.insert(at, k);
            }
            let clauses: Vec<Clause> = kinds.into_iter().map(|k| clause(k, &mut rng)).collect();
            let sentences = group(clauses, &mut rng);
            post_from_sentences(format!("synth-{i:05}"), &sentences, positive)
        })
        .collect()
}

/// Generates `n` gold-annotated sentences from the same grammar, mixing
/// background, trigger and negated-trigger clauses.
pub fn synthesize_treebank(n: usize, rng_seed: u64) -> Vec<SynthSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|_| {
            let n_clauses = if rng.gen_bool(0.3) { 2 } else { 1 };
            let clauses = (0..n_clauses)
                .map(|_| {
                    let kind = match rng.gen_range(0..6) {
                        0 => ClauseKind::Trigger,
                        1 => ClauseKind::NegatedTrigger,
                        _ => ClauseKind::Background,
                    };
                    clause(kind, &mut rng)
                })
                .collect();
            assemble(clauses, &mut rng)
        })
        .collect()
}
