//! Detection metrics and ROUGE-n scoring of explanation spans.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Post};
use crate::explain::ExplanationRecord;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("no prediction for gold ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Counts `(gold, probability)` pairs, predicting positive when
/// `probability ≥ threshold`.
pub fn detection_report(pairs: &[(bool, f64)], threshold: f64) -> Result<DetectionReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for &(gold, p) in pairs {
        match (gold, p >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(DetectionReport {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1: harmonic(precision, recall),
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n == 0 {
        return m;
    }
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn lowered(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.lower).collect()
}

/// ROUGE-n over lower-cased corpus tokens with clipped counts. Either side
/// without n-grams scores 0 on every metric.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    rouge_tokens(&lowered(candidate), &lowered(reference), n)
}

pub fn rouge_tokens(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    let cand = ngrams(candidate, n);
    let refs = ngrams(reference, n);
    let cand_total: usize = cand.values().sum();
    let ref_total: usize = refs.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return RougeScore::default();
    }
    let overlap: usize = refs
        .iter()
        .map(|(g, &rc)| rc.min(cand.get(g).copied().unwrap_or(0)))
        .sum();
    let precision = ratio(overlap, cand_total);
    let recall = ratio(overlap, ref_total);
    RougeScore {
        precision,
        recall,
        f1: harmonic(precision, recall),
    }
}

/// Mean of per-sample scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusRouge {
    pub n: usize,
    pub samples: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn mean_rouge(n: usize, scores: &[RougeScore]) -> Result<CorpusRouge, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = scores.len() as f64;
    Ok(CorpusRouge {
        n,
        samples: scores.len(),
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / k,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / k,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / k,
    })
}

/// Scores every gold-positive post against the record with the same id. A
/// record without a span counts as an empty candidate.
pub fn explanation_report(records: &[ExplanationRecord], gold: &[Post], n: usize) -> Result<CorpusRouge, EvalError> {
    let by_id: HashMap<&str, &ExplanationRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut missing = Vec::new();
    let mut scores = Vec::new();
    for post in gold {
        let Some(reference) = post.gold_text() else {
            continue;
        };
        match by_id.get(post.id.as_str()) {
            Some(r) => scores.push(rouge_n(r.explanation_text.as_deref().unwrap_or(""), &reference, n)),
            None => missing.push(post.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingIds(missing));
    }
    mean_rouge(n, &scores)
}

/// How texts were normalized before n-gram counting.
pub const ROUGE_SETTINGS: &str = "corpus tokenizer, lower-cased, no stemming, no stopword removal, per-sample mean";

pub fn detection_table(rows: &[(String, DetectionReport)]) -> String {
    let w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("model".len());
    let mut s = format!("{:<w$}  {:>9}  {:>9}  {:>9}\n", "model", "precision", "recall", "f1");
    for (name, r) in rows {
        let _ = writeln!(s, "{name:<w$}  {:>9.3}  {:>9.3}  {:>9.3}", r.precision, r.recall, r.f1);
    }
    s
}

/// One row per configuration; columns are ROUGE-1 and ROUGE-2 P/R/F1.
pub fn rouge_table(rows: &[(String, CorpusRouge, CorpusRouge)]) -> String {
    let w = rows.iter().map(|(n, _, _)| n.len()).max().unwrap_or(0).max("configuration".len());
    let mut s = format!(
        "{:<w$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "configuration", "R1-P", "R1-R", "R1-F", "R2-P", "R2-R", "R2-F"
    );
    for (name, r1, r2) in rows {
        let _ = writeln!(
            s,
            "{name:<w$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}",
            r1.precision, r1.recall, r1.f1, r2.precision, r2.recall, r2.f1
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detection_hand_count() {
        let r = detection_report(&[(true, 0.9), (true, 0.2), (false, 0.8), (false, 0.1)], 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (1, 1, 1, 1));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn detection_conventions() {
        let r = detection_report(&[(true, 1.0), (false, 0.0)], 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = detection_report(&[(true, 0.1), (false, 0.2)], 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = detection_report(&[(true, 0.5)], 0.5).unwrap();
        assert_eq!(r.tp, 1);
        assert_eq!(detection_report(&[], 0.5), Err(EvalError::Empty));
    }

    #[test]
    fn rouge_hand_case() {
        let s = rouge_n("to kill myself", "kill myself", 1);
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.f1, 0.8);
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        for n in [1, 2] {
            let s = rouge_n("I want to vanish.", "i want to vanish .", n);
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(rouge_n("a b", "c d", 2), RougeScore::default());
        assert_eq!(rouge_n("a", "a", 2), RougeScore::default());
        assert_eq!(rouge_n("", "a", 1), RougeScore::default());
    }

    #[test]
    fn clipping() {
        let s = rouge_n("the the the", "the cat", 1);
        assert_eq!(s.precision, 1.0 / 3.0);
        assert_eq!(s.recall, 0.5);
    }

    fn post(id: &str, text: &str, gold: Option<&str>) -> Post {
        crate::corpus::DatasetRecord {
            id: id.into(),
            text: text.into(),
            label: Some(gold.is_some() as u8),
            explanation: gold.map(str::to_string),
        }
        .into_post()
        .unwrap()
    }

    fn record(id: &str, text: Option<&str>) -> ExplanationRecord {
        ExplanationRecord {
            id: id.into(),
            label_prob: 0.9,
            predicted_label: text.is_some() as u8,
            explanation_text: text.map(str::to_string),
            token_start: None,
            token_end: None,
            sentence_index: None,
            mechanism: "coef".into(),
            fallback: false,
        }
    }

    #[test]
    fn corpus_means() {
        let gold = vec![
            post("a", "x y. gone now", Some("gone now")),
            post("b", "p q r", Some("q r")),
            post("c", "nothing here", None),
        ];
        let exact = vec![record("a", Some("gone now")), record("b", Some("q r"))];
        assert_eq!(explanation_report(&exact, &gold, 1).unwrap().f1, 1.0);
        let half = vec![record("a", Some("gone now")), record("b", Some("p"))];
        let r = explanation_report(&half, &gold, 1).unwrap();
        assert_eq!((r.f1, r.samples), (0.5, 2));
        let none = vec![record("a", None), record("b", Some("q r"))];
        assert_eq!(explanation_report(&none, &gold, 2).unwrap().f1, 0.5);
        assert_eq!(
            explanation_report(&exact[..1], &gold, 1),
            Err(EvalError::MissingIds(vec!["b".into()]))
        );
        assert_eq!(explanation_report(&exact, &gold[2..], 1), Err(EvalError::Empty));
    }

    #[test]
    fn tables_align() {
        let r = detection_report(&[(true, 0.9)], 0.5).unwrap();
        let t = detection_table(&[("neural".into(), r), ("logistic regression".into(), r)]);
        let widths: Vec<usize> = t.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
        let c = mean_rouge(1, &[RougeScore::default()]).unwrap();
        assert_eq!(rouge_table(&[("x".into(), c, c)]).lines().count(), 2);
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(prop_oneof!["a", "b", "c"].prop_map(String::from), 0..8)
    }

    proptest! {
        #[test]
        fn swapping_sides_swaps_precision_and_recall(a in words(), b in words(), n in 1usize..3) {
            let x = rouge_tokens(&a, &b, n);
            let y = rouge_tokens(&b, &a, n);
            prop_assert_eq!(x.precision, y.recall);
            prop_assert_eq!(x.recall, y.precision);
            prop_assert_eq!(x.f1, y.f1);
        }

        #[test]
        fn unmatched_token_never_raises_precision(a in words(), b in words()) {
            let before = rouge_tokens(&a, &b, 1);
            let mut longer = a.clone();
            longer.push("zzz".into());
            let after = rouge_tokens(&longer, &b, 1);
            prop_assert!(after.precision <= before.precision || a.is_empty());
        }
    }
}
