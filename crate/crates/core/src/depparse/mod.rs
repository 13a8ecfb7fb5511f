//! Dependency trees, CoNLL-U input/output, and a built-in greedy
//! arc-standard parser with an averaged-perceptron tagger.

mod conllu;
mod parser;
mod perceptron;
mod tagger;

use thiserror::Error;

use crate::checkpoint::{CheckpointError, Container, NamedTensor};
use crate::corpus::{SynthSentence, TokenRange};

pub use conllu::{read_conllu, read_conllu_str, write_conllu, write_conllu_string, ConlluError};
pub use parser::{train_parser, ParserModel, ParserStats, Transition};
pub use perceptron::WeightTable;
pub use tagger::{train_tagger, TaggerModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("{words} words but {upos} tags and {heads} heads")]
    LengthMismatch { words: usize, upos: usize, heads: usize },
    #[error("token {token} has head {head} outside the sentence")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("sentence has no root")]
    NoRoot,
    #[error("sentence has {} roots", .0.len())]
    MultipleRoots(Vec<usize>),
    #[error("head cycle through token {0}")]
    Cycle(usize),
    #[error("subtree of token {0} is not contiguous")]
    NonProjective(usize),
}

#[derive(Debug, Error)]
pub enum DepParseError {
    #[error("no usable training sentences ({dropped} dropped)")]
    EmptyTreebank { dropped: usize },
    #[error("cannot parse an empty sentence")]
    EmptySentence,
    #[error("invalid parser config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// One sentence with coarse tags and heads. `heads[i]` is `None` for the
/// root; `deprels` are carried through CoNLL-U but otherwise unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepTree {
    pub words: Vec<String>,
    pub upos: Vec<String>,
    pub heads: Vec<Option<usize>>,
    pub deprels: Vec<String>,
}

impl DepTree {
    /// Builds a tree, rejecting anything that is not a single-rooted acyclic
    /// head graph. Projectivity is not required here.
    pub fn new(words: Vec<String>, upos: Vec<String>, heads: Vec<Option<usize>>) -> Result<Self, TreeError> {
        let deprels = vec!["_".to_string(); words.len()];
        let tree = DepTree {
            words,
            upos,
            heads,
            deprels,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.heads[i].is_none()).collect()
    }

    /// The root of a single-rooted tree.
    pub fn root(&self) -> Option<usize> {
        match self.roots()[..] {
            [r] => Some(r),
            _ => None,
        }
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.heads[i] == Some(node)).collect()
    }

    /// Lengths match, heads are in range and every head chain ends at a
    /// root. Several roots are allowed.
    pub fn check_acyclic(&self) -> Result<(), TreeError> {
        let n = self.len();
        if self.upos.len() != n || self.heads.len() != n || self.deprels.len() != n {
            return Err(TreeError::LengthMismatch {
                words: n,
                upos: self.upos.len(),
                heads: self.heads.len(),
            });
        }
        for (token, h) in self.heads.iter().enumerate() {
            if let Some(head) = *h {
                if head >= n {
                    return Err(TreeError::HeadOutOfRange { token, head });
                }
            }
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = self.heads[cur] {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(TreeError::Cycle(start));
                }
            }
        }
        Ok(())
    }

    /// Single root, no cycles.
    pub fn validate(&self) -> Result<(), TreeError> {
        self.check_acyclic()?;
        let roots = self.roots();
        match roots.len() {
            0 if self.is_empty() => Ok(()),
            0 => Err(TreeError::NoRoot),
            1 => Ok(()),
            _ => Err(TreeError::MultipleRoots(roots)),
        }
    }

    /// [`validate`](Self::validate) plus projectivity: what the explanation
    /// generator needs.
    pub fn validate_projective(&self) -> Result<(), TreeError> {
        self.validate()?;
        match (0..self.len()).find(|&i| !self.is_contiguous(i)) {
            Some(i) => Err(TreeError::NonProjective(i)),
            None => Ok(()),
        }
    }

    pub fn is_single_rooted(&self) -> bool {
        self.roots().len() == 1
    }

    pub fn is_projective(&self) -> bool {
        self.check_acyclic().is_ok() && (0..self.len()).all(|i| self.is_contiguous(i))
    }

    fn is_contiguous(&self, node: usize) -> bool {
        let d = self.descendants(node);
        d.last().unwrap() - d[0] + 1 == d.len()
    }

    /// `node` and everything it dominates, ascending.
    pub fn descendants(&self, node: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.dominates(node, i)).collect()
    }

    /// Whether `a` is `b` or an ancestor of `b`. Assumes an acyclic graph.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.heads[cur] {
                Some(h) => cur = h,
                None => return false,
            }
        }
    }

    /// Distance from the root, breadth-first; `None` for a malformed tree.
    pub fn depths(&self) -> Option<Vec<usize>> {
        let root = self.root()?;
        let mut depth = vec![usize::MAX; self.len()];
        depth[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(h) = queue.pop_front() {
            for c in self.children(h) {
                if depth[c] == usize::MAX {
                    depth[c] = depth[h] + 1;
                    queue.push_back(c);
                }
            }
        }
        depth.iter().all(|&d| d != usize::MAX).then_some(depth)
    }

    /// Smallest interval covering `node` and its descendants. In a projective
    /// tree this is exactly the descendant set.
    pub fn subtree_span(&self, node: usize) -> TokenRange {
        let d = self.descendants(node);
        TokenRange::new(d[0], d.last().unwrap() + 1)
    }

    /// Pseudo-projective lifting: while some arc crosses a token its head
    /// does not dominate, reattach the dependent of the shortest such arc to
    /// its grandparent. Requires a single-rooted acyclic tree.
    pub fn projectivized(&self) -> DepTree {
        let mut t = self.clone();
        loop {
            let mut worst: Option<(usize, usize)> = None;
            for d in 0..t.len() {
                let Some(h) = t.heads[d] else { continue };
                let (lo, hi) = (h.min(d), h.max(d));
                if (lo + 1..hi).any(|k| !t.dominates(h, k)) {
                    let len = hi - lo;
                    if worst.map_or(true, |(_, l)| len < l) {
                        worst = Some((d, len));
                    }
                }
            }
            match worst {
                Some((d, _)) => {
                    let h = t.heads[d].expect("non-root dependent");
                    t.heads[d] = t.heads[h];
                }
                None => return t,
            }
        }
    }

    /// Training copy of a treebank sentence: extra roots hang off the first
    /// verb root (else the first root), then crossing arcs are lifted.
    pub fn for_training(&self) -> DepTree {
        let mut t = self.clone();
        let roots = t.roots();
        let Some(&first) = roots.first() else { return t };
        let keep = roots
            .iter()
            .copied()
            .find(|&r| t.upos[r].eq_ignore_ascii_case("verb"))
            .unwrap_or(first);
        for r in roots {
            if r != keep {
                t.heads[r] = Some(keep);
            }
        }
        t.projectivized()
    }

    /// Unlabeled attachment matches against `gold`.
    pub fn attachment_matches(&self, gold: &DepTree) -> usize {
        self.heads.iter().zip(&gold.heads).filter(|(a, b)| a == b).count()
    }
}

impl From<&SynthSentence> for DepTree {
    fn from(s: &SynthSentence) -> Self {
        DepTree {
            words: s.words.clone(),
            upos: s.upos.clone(),
            heads: s.heads.clone(),
            deprels: vec!["_".to_string(); s.words.len()],
        }
    }
}

/// Tagger and parser bundled for checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct DepParser {
    pub tagger: TaggerModel,
    pub parser: ParserModel,
}

const KIND: &str = "dependency_parser";

impl DepParser {
    pub fn parse<S: AsRef<str>>(&self, tokens: &[S]) -> Result<DepTree, DepParseError> {
        parse_sentence(&self.parser, &self.tagger, tokens)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.config.insert("kind".into(), KIND.into());
        self.tagger.table.store("tagger", &mut c);
        c.config.insert("tagger.tags".into(), serde_json::json!(self.tagger.tags));
        self.parser.table.store("parser", &mut c);
        let names: Vec<&str> = Transition::ALL.iter().map(|t| t.name()).collect();
        c.config.insert("parser.transitions".into(), serde_json::json!(names));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, DepParseError> {
        c.check_kind(KIND)?;
        let tags: Vec<String> = c.config_field("tagger.tags")?;
        let tagger_table = WeightTable::load("tagger", c, tags.len())?;
        let names: Vec<String> = c.config_field("parser.transitions")?;
        if names.iter().map(String::as_str).ne(Transition::ALL.iter().map(|t| t.name())) {
            return Err(CheckpointError::Config(format!("unexpected transition inventory {names:?}")).into());
        }
        let parser_table = WeightTable::load("parser", c, Transition::ALL.len())?;
        Ok(DepParser {
            tagger: TaggerModel::from_parts(tags, tagger_table),
            parser: ParserModel::from_table(parser_table),
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), DepParseError> {
        Ok(self.to_container().write(path)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DepParseError> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Tags, then parses. The result is always a single-rooted projective tree.
pub fn parse_sentence<S: AsRef<str>>(parser: &ParserModel, tagger: &TaggerModel, tokens: &[S]) -> Result<DepTree, DepParseError> {
    if tokens.is_empty() {
        return Err(DepParseError::EmptySentence);
    }
    let words: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let upos = tagger.tag(&words);
    let heads = parser.parse(&words, &upos);
    Ok(DepTree {
        deprels: vec!["_".to_string(); words.len()],
        words,
        upos,
        heads,
    })
}

pub(crate) fn named(prefix: &str, name: &str, shape: &[usize], data: Vec<f64>) -> NamedTensor {
    NamedTensor::new(format!("{prefix}.{name}"), shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tree(words: &str, upos: &str, heads: &[i32]) -> DepTree {
        let heads = heads.iter().map(|&h| (h >= 0).then_some(h as usize)).collect();
        DepTree::new(
            words.split(' ').map(String::from).collect(),
            upos.split(' ').map(String::from).collect(),
            heads,
        )
        .unwrap()
    }

    fn the_cat_sat() -> DepTree {
        tree("the cat sat the mat", "DET NOUN VERB DET NOUN", &[1, 2, -1, 4, 2])
    }

    #[test]
    fn hand_built_spans() {
        let t = the_cat_sat();
        assert_eq!(t.subtree_span(4), TokenRange::new(3, 5));
        assert_eq!(t.subtree_span(0), TokenRange::new(0, 1));
        assert_eq!(t.subtree_span(2), TokenRange::new(0, 5));
        assert_eq!(t.descendants(1), vec![0, 1]);
        assert_eq!(t.depths().unwrap(), vec![2, 1, 0, 2, 1]);
        assert_eq!(t.children(2), vec![1, 4]);
        assert!(t.validate_projective().is_ok());
    }

    #[test]
    fn structural_errors() {
        let w = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        let cyc = DepTree::new(w("a b c"), w("X X X"), vec![Some(1), Some(0), None]);
        assert!(matches!(cyc, Err(TreeError::Cycle(_))));
        let two = DepTree::new(w("a b"), w("X X"), vec![None, None]);
        assert_eq!(two.unwrap_err(), TreeError::MultipleRoots(vec![0, 1]));
        let none = DepTree::new(w("a b"), w("X X"), vec![Some(1), Some(0)]);
        assert!(none.is_err());
        let out = DepTree::new(w("a"), w("X"), vec![Some(3)]);
        assert_eq!(out.unwrap_err(), TreeError::HeadOutOfRange { token: 0, head: 3 });
    }

    #[test]
    fn crossing_arc_is_non_projective_and_lifting_fixes_it() {
        // a→c crosses b, whose head d is outside a's subtree
        let t = tree("a b c d", "X X X X", &[3, 3, 0, -1]);
        assert!(!t.is_projective());
        assert_eq!(t.validate_projective(), Err(TreeError::NonProjective(0)));
        let p = t.projectivized();
        assert!(p.is_projective());
        assert_eq!(p.heads, vec![Some(3), Some(3), Some(3), None]);
    }

    #[test]
    fn training_copy_has_one_root() {
        // two roots, "zag" is the verb
        let t = DepTree {
            words: vec!["ik".into(), "zag".into(), "huis".into()],
            upos: vec!["pron".into(), "verb".into(), "noun".into()],
            heads: vec![None, None, Some(1)],
            deprels: vec!["_".into(); 3],
        };
        let n = t.for_training();
        assert_eq!(n.heads, vec![Some(1), None, Some(1)]);
        assert!(n.validate_projective().is_ok());
    }

    #[test]
    fn synth_conversion_is_projective() {
        for s in crate::corpus::synthesize_treebank(200, 3) {
            assert!(DepTree::from(&s).validate_projective().is_ok(), "{:?}", s.words);
        }
    }
}
