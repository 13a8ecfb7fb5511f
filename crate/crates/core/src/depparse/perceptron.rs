use std::collections::HashMap;

use crate::checkpoint::{CheckpointError, Container};
use crate::hash::Fnv1a;

use super::named;

/// Hashes a feature template name and its values.
pub(crate) fn feature(template: &str, parts: &[&str]) -> u64 {
    let mut h = Fnv1a::default();
    h.update(template.as_bytes());
    for p in parts {
        h.update(&[0x1f]);
        h.update(p.as_bytes());
    }
    h.finish()
}

/// Multiclass perceptron with lazily accumulated weight sums.
pub(crate) struct AveragedPerceptron {
    classes: usize,
    weights: HashMap<u64, Vec<f64>>,
    totals: HashMap<u64, Vec<f64>>,
    stamps: HashMap<u64, Vec<u64>>,
    instances: u64,
}

impl AveragedPerceptron {
    pub fn new(classes: usize) -> Self {
        AveragedPerceptron {
            classes,
            weights: HashMap::new(),
            totals: HashMap::new(),
            stamps: HashMap::new(),
            instances: 0,
        }
    }

    pub fn scores(&self, feats: &[u64]) -> Vec<f64> {
        let mut s = vec![0.0; self.classes];
        for f in feats {
            if let Some(w) = self.weights.get(f) {
                s.iter_mut().zip(w).for_each(|(a, b)| *a += b);
            }
        }
        s
    }

    /// Counts one training instance; updates only when `guess != truth`.
    pub fn update(&mut self, truth: usize, guess: usize, feats: &[u64]) {
        self.instances += 1;
        if truth == guess {
            return;
        }
        let now = self.instances;
        let classes = self.classes;
        for &f in feats {
            let w = self.weights.entry(f).or_insert_with(|| vec![0.0; classes]);
            let t = self.totals.entry(f).or_insert_with(|| vec![0.0; classes]);
            let s = self.stamps.entry(f).or_insert_with(|| vec![0; classes]);
            for (c, delta) in [(truth, 1.0), (guess, -1.0)] {
                t[c] += (now - s[c]) as f64 * w[c];
                s[c] = now;
                w[c] += delta;
            }
        }
    }

    /// Averages every weight over all instances seen.
    pub fn average(self) -> WeightTable {
        let n = self.instances.max(1) as f64;
        let mut rows: Vec<(u64, Vec<f64>)> = self
            .weights
            .into_iter()
            .map(|(f, w)| {
                let t = &self.totals[&f];
                let s = &self.stamps[&f];
                let avg = (0..self.classes)
                    .map(|c| (t[c] + (self.instances - s[c]) as f64 * w[c]) / n)
                    .collect::<Vec<f64>>();
                (f, avg)
            })
            .filter(|(_, w)| w.iter().any(|&v| v != 0.0))
            .collect();
        rows.sort_by_key(|(f, _)| *f);
        WeightTable::from_rows(self.classes, rows)
    }
}

/// Frozen feature-hash → per-class weights map.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    classes: usize,
    keys: Vec<u64>,
    weights: Vec<f64>,
    index: HashMap<u64, usize>,
}

impl WeightTable {
    fn from_rows(classes: usize, rows: Vec<(u64, Vec<f64>)>) -> Self {
        let mut keys = Vec::with_capacity(rows.len());
        let mut weights = Vec::with_capacity(rows.len() * classes);
        for (k, w) in rows {
            keys.push(k);
            weights.extend(w);
        }
        let index = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        WeightTable {
            classes,
            keys,
            weights,
            index,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn num_features(&self) -> usize {
        self.keys.len()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn scores(&self, feats: &[u64]) -> Vec<f64> {
        let mut s = vec![0.0; self.classes];
        for f in feats {
            if let Some(&i) = self.index.get(f) {
                let row = &self.weights[i * self.classes..(i + 1) * self.classes];
                s.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
        }
        s
    }

    /// Weights go in as a `[features, classes]` tensor, hashes in the JSON
    /// block.
    pub(crate) fn store(&self, prefix: &str, c: &mut Container) {
        c.push(named(prefix, "weights", &[self.keys.len(), self.classes], self.weights.clone()));
        c.config.insert(format!("{prefix}.features"), serde_json::json!(self.keys));
    }

    pub(crate) fn load(prefix: &str, c: &Container, classes: usize) -> Result<Self, CheckpointError> {
        let keys: Vec<u64> = c.config_field(&format!("{prefix}.features"))?;
        let t = c.expect(&format!("{prefix}.weights"), &[keys.len(), classes])?;
        if !t.data.iter().all(|w| w.is_finite()) {
            return Err(CheckpointError::Shape {
                name: t.name.clone(),
                msg: "non-finite weight".into(),
            });
        }
        let rows = keys.into_iter().zip(t.data.chunks(classes.max(1)).map(<[f64]>::to_vec)).collect();
        Ok(WeightTable::from_rows(classes, rows))
    }
}

/// Highest-scoring allowed class; ties go to the lower index.
pub(crate) fn argmax_where(scores: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if allowed(i) && best.map_or(true, |b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_matches_explicit_sum() {
        // weights after each of 4 instances: f: class0 = 1,1,1,1 ; class1 = -1,-1,-1,-1
        // then a second update at instance 3 moves class0 to 0 and class1 to 0
        let mut p = AveragedPerceptron::new(2);
        p.update(0, 1, &[7]);
        p.update(0, 0, &[7]);
        p.update(1, 0, &[7]);
        p.update(1, 1, &[7]);
        let avg = p.average();
        // class0 history 1,1,0,0 ; class1 history -1,-1,0,0
        assert_eq!(avg.scores(&[7]), vec![0.5, -0.5]);
    }

    #[test]
    fn zero_rows_are_dropped() {
        let mut p = AveragedPerceptron::new(2);
        p.update(0, 0, &[1]);
        assert_eq!(p.average().num_features(), 0);
    }

    #[test]
    fn argmax_prefers_lower_index_on_ties() {
        assert_eq!(argmax_where(&[1.0, 1.0, 0.0], |_| true), Some(0));
        assert_eq!(argmax_where(&[1.0, 1.0, 0.0], |i| i > 0), Some(1));
        assert_eq!(argmax_where(&[1.0], |_| false), None);
    }
}
