use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::perceptron::{argmax_where, feature, AveragedPerceptron};
use super::{DepParseError, DepTree, WeightTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Shift,
    /// Second stack item becomes a dependent of the top.
    LeftArc,
    /// Top becomes a dependent of the second item.
    RightArc,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Transition::Shift, Transition::LeftArc, Transition::RightArc];

    pub fn name(self) -> &'static str {
        match self {
            Transition::Shift => "shift",
            Transition::LeftArc => "left_arc",
            Transition::RightArc => "right_arc",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Arc-standard configuration without an artificial root token: parsing
/// ends when the buffer is empty and one word is left on the stack, and
/// that word is the root.
struct State {
    stack: Vec<usize>,
    next: usize,
    heads: Vec<Option<usize>>,
    left: Vec<Vec<usize>>,
    right: Vec<Vec<usize>>,
}

impl State {
    fn new(n: usize) -> Self {
        State {
            stack: Vec::new(),
            next: 0,
            heads: vec![None; n],
            left: vec![Vec::new(); n],
            right: vec![Vec::new(); n],
        }
    }

    fn n(&self) -> usize {
        self.heads.len()
    }

    fn terminal(&self) -> bool {
        self.next == self.n() && self.stack.len() <= 1
    }

    fn legal(&self, t: Transition) -> bool {
        match t {
            Transition::Shift => self.next < self.n(),
            Transition::LeftArc | Transition::RightArc => self.stack.len() >= 2,
        }
    }

    fn apply(&mut self, t: Transition) {
        match t {
            Transition::Shift => {
                self.stack.push(self.next);
                self.next += 1;
            }
            Transition::LeftArc => {
                let s0 = self.stack.pop().unwrap();
                let s1 = self.stack.pop().unwrap();
                self.heads[s1] = Some(s0);
                self.left[s0].insert(0, s1);
                self.stack.push(s0);
            }
            Transition::RightArc => {
                let s0 = self.stack.pop().unwrap();
                let s1 = *self.stack.last().unwrap();
                self.heads[s0] = Some(s1);
                self.right[s1].push(s0);
            }
        }
    }

    fn stack_at(&self, k: usize) -> Option<usize> {
        self.stack.len().checked_sub(k + 1).map(|i| self.stack[i])
    }

    fn buffer_at(&self, k: usize) -> Option<usize> {
        (self.next + k < self.n()).then_some(self.next + k)
    }
}

/// Static oracle; `None` when the gold tree is unreachable (not projective
/// or not single-rooted).
fn oracle(state: &State, gold: &[Option<usize>], gold_children: &[usize]) -> Option<Transition> {
    if let (Some(s0), Some(s1)) = (state.stack_at(0), state.stack_at(1)) {
        if gold[s1] == Some(s0) {
            return Some(Transition::LeftArc);
        }
        let attached = state.left[s0].len() + state.right[s0].len();
        if gold[s0] == Some(s1) && attached == gold_children[s0] {
            return Some(Transition::RightArc);
        }
    }
    state.legal(Transition::Shift).then_some(Transition::Shift)
}

struct Sentence<'a> {
    lowers: Vec<String>,
    tags: &'a [String],
}

const NONE: &str = "<none>";

fn features(s: &Sentence, st: &State) -> Vec<u64> {
    let w = |i: Option<usize>| i.map_or(NONE, |i| s.lowers[i].as_str());
    let t = |i: Option<usize>| i.map_or(NONE, |i| s.tags[i].as_str());
    let lc = |i: Option<usize>| i.and_then(|i| st.left[i].first().copied());
    let rc = |i: Option<usize>| i.and_then(|i| st.right[i].last().copied());
    let (s0, s1, s2) = (st.stack_at(0), st.stack_at(1), st.stack_at(2));
    let (b0, b1, b2) = (st.buffer_at(0), st.buffer_at(1), st.buffer_at(2));
    let dist = match (s0, s1) {
        (Some(a), Some(b)) => (a - b).min(5).to_string(),
        _ => "0".to_string(),
    };
    let val = |i: Option<usize>| i.map_or("-".to_string(), |i| format!("{}/{}", st.left[i].len(), st.right[i].len()));
    let (vs0, vs1) = (val(s0), val(s1));
    vec![
        feature("bias", &[]),
        feature("s0w", &[w(s0)]),
        feature("s0t", &[t(s0)]),
        feature("s0wt", &[w(s0), t(s0)]),
        feature("s1w", &[w(s1)]),
        feature("s1t", &[t(s1)]),
        feature("s1wt", &[w(s1), t(s1)]),
        feature("s2t", &[t(s2)]),
        feature("b0w", &[w(b0)]),
        feature("b0t", &[t(b0)]),
        feature("b0wt", &[w(b0), t(b0)]),
        feature("b1t", &[t(b1)]),
        feature("b1w", &[w(b1)]),
        feature("b2t", &[t(b2)]),
        feature("s0t.s1t", &[t(s0), t(s1)]),
        feature("s0w.s1w", &[w(s0), w(s1)]),
        feature("s0w.s1t", &[w(s0), t(s1)]),
        feature("s0t.s1w", &[t(s0), w(s1)]),
        feature("s0t.b0t", &[t(s0), t(b0)]),
        feature("s0w.b0w", &[w(s0), w(b0)]),
        feature("s1t.s0t.b0t", &[t(s1), t(s0), t(b0)]),
        feature("s2t.s1t.s0t", &[t(s2), t(s1), t(s0)]),
        feature("s0t.b0t.b1t", &[t(s0), t(b0), t(b1)]),
        feature("s0lc", &[t(s0), t(lc(s0))]),
        feature("s0rc", &[t(s0), t(rc(s0))]),
        feature("s1lc", &[t(s1), t(lc(s1))]),
        feature("s1rc", &[t(s1), t(rc(s1))]),
        feature("s1t.s0t.s0lc", &[t(s1), t(s0), t(lc(s0))]),
        feature("s1t.s1rc.s0t", &[t(s1), t(rc(s1)), t(s0)]),
        feature("dist", &[t(s0), t(s1), &dist]),
        feature("dist.w", &[w(s0), w(s1), &dist]),
        feature("val0", &[t(s0), &vs0]),
        feature("val1", &[t(s1), &vs1]),
        feature("end", &[t(s0), t(s1), if b0.is_none() { "empty" } else { "more" }]),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParserModel {
    pub(crate) table: WeightTable,
}

/// What [`train_parser`] used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParserStats {
    pub used: usize,
    /// Sentences the static oracle cannot derive.
    pub dropped: usize,
}

impl ParserModel {
    pub(crate) fn from_table(table: WeightTable) -> Self {
        ParserModel { table }
    }

    /// Greedy decoding; total for any nonempty input, and the result is a
    /// single-rooted projective tree.
    pub fn parse<S: AsRef<str>, U: AsRef<str>>(&self, words: &[S], tags: &[U]) -> Vec<Option<usize>> {
        assert_eq!(words.len(), tags.len());
        let tags: Vec<String> = tags.iter().map(|t| t.as_ref().to_string()).collect();
        let s = Sentence {
            lowers: words.iter().map(|w| w.as_ref().to_lowercase()).collect(),
            tags: &tags,
        };
        let mut st = State::new(words.len());
        while !st.terminal() {
            let scores = self.table.scores(&features(&s, &st));
            let best = argmax_where(&scores, |i| st.legal(Transition::ALL[i])).expect("a legal transition");
            st.apply(Transition::ALL[best]);
        }
        st.heads
    }

    pub fn num_features(&self) -> usize {
        self.table.num_features()
    }

    /// Unlabeled attachment score against gold trees, using `tags` per
    /// sentence (gold or predicted).
    pub fn uas(&self, gold: &[DepTree], tags: &[Vec<String>]) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for (g, t) in gold.iter().zip(tags) {
            let heads = self.parse(&g.words, t);
            hit += heads.iter().zip(&g.heads).filter(|(a, b)| a == b).count();
            total += g.len();
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

/// Whether the static oracle reproduces `tree` exactly.
fn derivable(tree: &DepTree) -> bool {
    if tree.is_empty() || tree.validate_projective().is_err() {
        return false;
    }
    let children = gold_children(tree);
    let mut st = State::new(tree.len());
    while !st.terminal() {
        match oracle(&st, &tree.heads, &children) {
            Some(t) => st.apply(t),
            None => return false,
        }
    }
    st.heads == tree.heads
}

fn gold_children(tree: &DepTree) -> Vec<usize> {
    let mut c = vec![0; tree.len()];
    for h in tree.heads.iter().flatten() {
        c[*h] += 1;
    }
    c
}

/// Averaged perceptron over the static-oracle transitions of every
/// projective single-rooted sentence (the rest are dropped and counted).
/// Gold tags are used as features.
pub fn train_parser(treebank: &[DepTree], iterations: usize, rng_seed: u64) -> Result<(ParserModel, ParserStats), DepParseError> {
    if iterations == 0 {
        return Err(DepParseError::InvalidConfig("iterations must be positive".into()));
    }
    let usable: Vec<&DepTree> = treebank.iter().filter(|t| derivable(t)).collect();
    let stats = ParserStats {
        used: usable.len(),
        dropped: treebank.len() - usable.len(),
    };
    if usable.is_empty() {
        return Err(DepParseError::EmptyTreebank { dropped: stats.dropped });
    }
    let prepared: Vec<(Sentence, Vec<usize>)> = usable
        .iter()
        .map(|t| {
            let s = Sentence {
                lowers: t.words.iter().map(|w| w.to_lowercase()).collect(),
                tags: &t.upos,
            };
            (s, gold_children(t))
        })
        .collect();
    let mut model = AveragedPerceptron::new(Transition::ALL.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for _ in 0..iterations {
        order.shuffle(&mut rng);
        for &si in &order {
            let (s, children) = &prepared[si];
            let gold = &usable[si].heads;
            let mut st = State::new(gold.len());
            while !st.terminal() {
                let truth = oracle(&st, gold, children).expect("derivable sentence");
                let f = features(s, &st);
                let guess = argmax_where(&model.scores(&f), |i| st.legal(Transition::ALL[i])).expect("a legal transition");
                model.update(truth.index(), guess, &f);
                st.apply(truth);
            }
        }
    }
    Ok((ParserModel::from_table(model.average()), stats))
}
