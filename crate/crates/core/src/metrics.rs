//! Classification metrics: k-class accuracy, binary F1, averaged
//! multiclass F1 and per-label multilabel scores.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(dim_err("predictions vs truths", &[a], &[b]));
    }
    if a == 0 {
        return Err(Error::InsufficientData("no samples to score".into()));
    }
    Ok(())
}

/// Fraction of predictions equal to the truth, classes in `[0, k)`.
pub fn acc_k(pred: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    if let Some(bad) = pred.iter().chain(truth).find(|&&c| c >= k) {
        return Err(Error::Contract(format!("class {bad} outside [0, {k})")));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl BinaryCounts {
    pub fn tally(pred: &[bool], truth: &[bool]) -> Self {
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, and 0 when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

pub fn f1_binary(pred: &[bool], truth: &[bool]) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    Ok(BinaryCounts::tally(pred, truth).f1())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    /// Per-class F1 weighted by true support.
    #[default]
    Weighted,
    Macro,
}

impl FromStr for F1Average {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(F1Average::Weighted),
            "macro" => Ok(F1Average::Macro),
            _ => Err(Error::Validation(format!("unknown F1 average {s:?}"))),
        }
    }
}

/// One-vs-rest F1 per class, averaged.
pub fn multiclass_f1(pred: &[usize], truth: &[usize], k: usize, average: F1Average) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    let mut total = 0.0;
    for c in 0..k {
        let p: Vec<bool> = pred.iter().map(|&x| x == c).collect();
        let t: Vec<bool> = truth.iter().map(|&x| x == c).collect();
        let f1 = BinaryCounts::tally(&p, &t).f1();
        total += match average {
            F1Average::Weighted => f1 * t.iter().filter(|&&b| b).count() as f64 / truth.len() as f64,
            F1Average::Macro => f1 / k as f64,
        };
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelEval {
    pub accuracy: Vec<f64>,
    pub f1: Vec<f64>,
    pub counts: Vec<BinaryCounts>,
}

/// Column-wise accuracy and F1 over an `n × J` 0/1 matrix.
pub fn multilabel_eval(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<MultilabelEval> {
    same_len(pred.len(), truth.len())?;
    let j = truth[0].len();
    if pred.iter().chain(truth).any(|row| row.len() != j) {
        return Err(Error::Dimension(format!("every row must have {j} labels")));
    }
    let counts: Vec<BinaryCounts> = (0..j)
        .map(|c| {
            let p: Vec<bool> = pred.iter().map(|r| r[c]).collect();
            let t: Vec<bool> = truth.iter().map(|r| r[c]).collect();
            BinaryCounts::tally(&p, &t)
        })
        .collect();
    Ok(MultilabelEval {
        accuracy: counts.iter().map(BinaryCounts::accuracy).collect(),
        f1: counts.iter().map(BinaryCounts::f1).collect(),
        counts,
    })
}

/// Named metric values plus the tallies they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub metrics: BTreeMap<String, f64>,
    /// `confusion[true][pred]` for multiclass tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_counts: Option<Vec<BinaryCounts>>,
}

impl EvalResult {
    /// The headline number: accuracy for multiclass, mean per-label
    /// accuracy for multilabel.
    pub fn accuracy(&self) -> f64 {
        self.metrics["acc"]
    }

    /// Multiclass scores. With `sentiment` the classes are scores `-3..=3`
    /// and binary polarity accuracy is reported as `acc2`.
    pub fn multiclass(pred: &[usize], truth: &[usize], k: usize, average: F1Average, sentiment: bool) -> Result<Self> {
        let acc = acc_k(pred, truth, k)?;
        let mut metrics = BTreeMap::new();
        metrics.insert("acc".to_string(), acc);
        metrics.insert("f1".to_string(), multiclass_f1(pred, truth, k, average)?);
        if sentiment {
            metrics.insert(format!("acc{k}"), acc);
            let polarity = |c: &usize| *c >= 3;
            let p: Vec<bool> = pred.iter().map(polarity).collect();
            let t: Vec<bool> = truth.iter().map(polarity).collect();
            let counts = BinaryCounts::tally(&p, &t);
            metrics.insert("acc2".to_string(), counts.accuracy());
            metrics.insert("f1_binary".to_string(), counts.f1());
        }
        let mut confusion = vec![vec![0; k]; k];
        for (&p, &t) in pred.iter().zip(truth) {
            confusion[t][p] += 1;
        }
        Ok(Self { n: pred.len(), metrics, confusion: Some(confusion), label_counts: None })
    }

    pub fn multilabel(pred: &[Vec<bool>], truth: &[Vec<bool>], names: &[String]) -> Result<Self> {
        let ml = multilabel_eval(pred, truth)?;
        if names.len() != ml.accuracy.len() {
            return Err(dim_err("label names", &[names.len()], &[ml.accuracy.len()]));
        }
        let mut metrics = BTreeMap::new();
        for (k, name) in names.iter().enumerate() {
            metrics.insert(format!("acc_{name}"), ml.accuracy[k]);
            metrics.insert(format!("f1_{name}"), ml.f1[k]);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        metrics.insert("acc".to_string(), mean(&ml.accuracy));
        metrics.insert("f1".to_string(), mean(&ml.f1));
        Ok(Self { n: pred.len(), metrics, confusion: None, label_counts: Some(ml.counts) })
    }
}
