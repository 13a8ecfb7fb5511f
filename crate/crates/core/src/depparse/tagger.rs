use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::perceptron::{argmax_where, feature, AveragedPerceptron};
use super::{DepParseError, DepTree, WeightTable};

const START: &str = "<s>";
const END: &str = "</s>";

/// Greedy left-to-right averaged-perceptron tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    /// Tag inventory, sorted.
    pub tags: Vec<String>,
    pub(crate) table: WeightTable,
}

fn affixes(word: &str) -> (Vec<&str>, Vec<&str>) {
    let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain([word.len()]).collect();
    let n = bounds.len() - 1;
    let pre = (1..=n.min(3)).map(|k| &word[..bounds[k]]).collect();
    let suf = (1..=n.min(3)).map(|k| &word[bounds[n - k]..]).collect();
    (pre, suf)
}

fn features(lowers: &[String], words: &[String], i: usize, prev_tag: &str) -> Vec<u64> {
    let w = words[i].as_str();
    let l = lowers[i].as_str();
    let prev = if i == 0 { START } else { lowers[i - 1].as_str() };
    let next = lowers.get(i + 1).map_or(END, String::as_str);
    let mut f = vec![
        feature("bias", &[]),
        feature("w", &[w]),
        feature("l", &[l]),
        feature("pt", &[prev_tag]),
        feature("pw", &[prev]),
        feature("nw", &[next]),
    ];
    let (pre, suf) = affixes(l);
    f.extend(pre.iter().map(|p| feature("p", &[p])));
    f.extend(suf.iter().map(|s| feature("s", &[s])));
    f
}

fn lowered(words: &[String]) -> Vec<String> {
    words.iter().map(|w| w.to_lowercase()).collect()
}

impl TaggerModel {
    pub(crate) fn from_parts(tags: Vec<String>, table: WeightTable) -> Self {
        TaggerModel { tags, table }
    }

    pub fn tag<S: AsRef<str>>(&self, words: &[S]) -> Vec<String> {
        let words: Vec<String> = words.iter().map(|w| w.as_ref().to_string()).collect();
        let lowers = lowered(&words);
        let mut out: Vec<String> = Vec::with_capacity(words.len());
        for i in 0..words.len() {
            let prev = out.last().map_or(START, String::as_str);
            let s = self.table.scores(&features(&lowers, &words, i, prev));
            let best = argmax_where(&s, |_| true).unwrap_or(0);
            out.push(self.tags.get(best).cloned().unwrap_or_default());
        }
        out
    }

    /// Fraction of tokens tagged as in `trees`.
    pub fn accuracy(&self, trees: &[DepTree]) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for t in trees {
            let tags = self.tag(&t.words);
            hit += tags.iter().zip(&t.upos).filter(|(a, b)| a == b).count();
            total += t.len();
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

/// Trains on the coarse tags of `treebank`, visiting sentences in a seeded
/// shuffled order each iteration. The previous-tag feature uses the
/// tagger's own predictions, as at inference time.
pub fn train_tagger(treebank: &[DepTree], iterations: usize, rng_seed: u64) -> Result<TaggerModel, DepParseError> {
    let usable: Vec<&DepTree> = treebank.iter().filter(|t| !t.is_empty()).collect();
    if usable.is_empty() {
        return Err(DepParseError::EmptyTreebank { dropped: treebank.len() });
    }
    if iterations == 0 {
        return Err(DepParseError::InvalidConfig("iterations must be positive".into()));
    }
    let mut tags: Vec<String> = usable.iter().flat_map(|t| t.upos.iter().cloned()).collect();
    tags.sort();
    tags.dedup();
    let index = |tag: &str| tags.binary_search_by(|t| t.as_str().cmp(tag)).expect("known tag");

    let mut model = AveragedPerceptron::new(tags.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let prepared: Vec<(Vec<String>, Vec<usize>)> = usable.iter().map(|t| (lowered(&t.words), t.upos.iter().map(|u| index(u)).collect())).collect();
    for _ in 0..iterations {
        order.shuffle(&mut rng);
        for &si in &order {
            let words = &usable[si].words;
            let (lowers, gold) = &prepared[si];
            let mut prev = START;
            for i in 0..words.len() {
                let f = features(lowers, words, i, prev);
                let guess = argmax_where(&model.scores(&f), |_| true).unwrap_or(0);
                model.update(gold[i], guess, &f);
                prev = &tags[guess];
            }
        }
    }
    Ok(TaggerModel {
        table: model.average(),
        tags,
    })
}
