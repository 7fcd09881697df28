//! Node-level confusion metrics and best-match extension F1.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{predicted} predictions for {truth} labels")]
pub struct LengthMismatch {
    pub predicted: usize,
    pub truth: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl NodeMetrics {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn add(&mut self, other: &NodeMetrics) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn record(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

pub fn node_metrics(predicted: &[bool], truth: &[bool]) -> Result<NodeMetrics, LengthMismatch> {
    if predicted.len() != truth.len() {
        return Err(LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut m = NodeMetrics::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        m.record(p, t);
    }
    Ok(m)
}

/// Rates averaged over frameworks, each framework scored on its own.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub count: usize,
}

impl MacroMetrics {
    pub fn from_instances<'a>(items: impl IntoIterator<Item = &'a NodeMetrics>) -> MacroMetrics {
        let mut m = MacroMetrics::default();
        for x in items {
            m.precision += x.precision();
            m.recall += x.recall();
            m.f1 += x.f1();
            m.accuracy += x.accuracy();
            m.count += 1;
        }
        if m.count > 0 {
            let n = m.count as f64;
            m.precision /= n;
            m.recall /= n;
            m.f1 /= n;
            m.accuracy /= n;
        }
        m
    }
}

/// Pooled counts and per-framework averages over one evaluation set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSummary {
    pub micro: NodeMetrics,
    pub macro_: MacroMetrics,
}

impl MetricsSummary {
    pub fn from_instances(items: &[NodeMetrics]) -> MetricsSummary {
        let mut micro = NodeMetrics::default();
        for m in items {
            micro.add(m);
        }
        MetricsSummary {
            micro,
            macro_: MacroMetrics::from_instances(items),
        }
    }
}

/// Threshold from `{0.05, 0.10, ..., 0.95}` maximising pooled F1 of
/// `score >= tau` against `labels`; ties keep the lowest threshold.
pub fn best_threshold<'a>(pairs: impl Iterator<Item = (&'a [f64], &'a [bool])> + Clone) -> (f64, NodeMetrics) {
    let at = |tau: f64| {
        let mut m = NodeMetrics::default();
        for (scores, labels) in pairs.clone() {
            for (&p, &y) in scores.iter().zip(labels) {
                m.record(p >= tau, y);
            }
        }
        m
    };
    let mut best = (0.05, at(0.05));
    for k in 2..20 {
        let tau = k as f64 / 20.0;
        let m = at(tau);
        if m.f1() > best.1.f1() {
            best = (tau, m);
        }
    }
    best
}

pub fn set_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    let tp = predicted.intersection(gold).count();
    let p = ratio(tp, predicted.len());
    let r = ratio(tp, gold.len());
    if p + r == 0.0 {
        if predicted.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Best set-F1 against any gold extension. With no gold extensions the score
/// is 1 exactly when the prediction is empty.
pub fn extension_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &[BTreeSet<T>]) -> f64 {
    if gold.is_empty() {
        return if predicted.is_empty() { 1.0 } else { 0.0 };
    }
    gold.iter().map(|g| set_f1(predicted, g)).fold(0.0, f64::max)
}
