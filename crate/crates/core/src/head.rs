//! Prediction stage: `logit_j = ⟨o_j, c_j⟩`, probabilities and losses.
//!
//! Because concepts are linear in the projected features, every logit
//! splits exactly into per-feature terms `p_i r_ij ⟨o_j, ĥ_ij⟩`. The GAM
//! ablation keeps the same parameters but drops the routing coefficients.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{bce_term, dot, log_sum_exp, sigmoid, Tape, Tensor, Var};
use crate::encoders::{FeatureSet, FeatureVars};
use crate::error::{dim_err, Error, Result};
use crate::routing::{project, project_var, RoutingWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Multiclass,
    Multilabel,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Multiclass => "multiclass",
            Task::Multilabel => "multilabel",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiclass" => Ok(Task::Multiclass),
            "multilabel" => Ok(Task::Multilabel),
            _ => Err(Error::Validation(format!("unknown task {s:?}"))),
        }
    }
}

/// A training target: a class index or a 0/1 vector over labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Class(usize),
    Labels(Vec<f64>),
}

impl Target {
    pub fn task(&self) -> Task {
        match self {
            Target::Class(_) => Task::Multiclass,
            Target::Labels(_) => Task::Multilabel,
        }
    }
}

/// `o_j` for every concept.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub d_c: usize,
    pub o: Vec<Tensor>,
}

impl ReadoutWeights {
    pub fn new(o: Vec<Tensor>) -> Result<Self> {
        let d_c = o.first().map(Tensor::len).ok_or_else(|| Error::Dimension("no readout vectors".into()))?;
        if let Some(bad) = o.iter().find(|t| t.shape() != [d_c]) {
            return Err(dim_err("readout vector", bad.shape(), &[d_c]));
        }
        Ok(Self { d_c, o })
    }

    pub fn init(d_c: usize, num_concepts: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d_c as f64).sqrt();
        Self { d_c, o: (0..num_concepts).map(|_| Tensor::uniform(&[d_c], bound, rng).trainable()).collect() }
    }

    pub fn num_concepts(&self) -> usize {
        self.o.len()
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.o.iter().map(|t| tape.param(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub task: Task,
}

impl Prediction {
    pub fn argmax(&self) -> usize {
        argmax(&self.probabilities)
    }

    /// Labels whose probability reaches 0.5.
    pub fn active_labels(&self) -> Vec<f64> {
        self.probabilities.iter().map(|&q| if q >= 0.5 { 1.0 } else { 0.0 }).collect()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// `logit_j = ⟨o_j, c_j⟩`, as one `[J]` vector.
pub fn logits_var(tape: &mut Tape, c: &[Var], o: &[Var]) -> Result<Var> {
    if c.len() != o.len() {
        return Err(dim_err("logits concepts/readouts", &[c.len()], &[o.len()]));
    }
    let terms = c.iter().zip(o).map(|(&cj, &oj)| tape.dot(oj, cj)).collect::<Result<Vec<_>>>()?;
    tape.concat(&terms)
}

/// `logit_j = Σ_i p_i ⟨o_j, ĥ_ij⟩`: the activations alone, no routing.
pub fn gam_logits_var(tape: &mut Tape, hhat: &[Vec<Var>], p: &[Var], o: &[Var]) -> Result<Var> {
    let p_vec = tape.concat(p)?;
    let mut logits = Vec::with_capacity(o.len());
    for (j, &oj) in o.iter().enumerate() {
        let col = hhat.iter().map(|row| tape.dot(oj, row[j])).collect::<Result<Vec<_>>>()?;
        let col = tape.concat(&col)?;
        logits.push(tape.dot(p_vec, col)?);
    }
    tape.concat(&logits)
}

/// Training loss on a `[J]` logit vector.
pub fn loss_var(tape: &mut Tape, logits: Var, target: &Target) -> Result<Var> {
    match target {
        Target::Class(k) => tape.cross_entropy(logits, *k),
        Target::Labels(y) => tape.binary_cross_entropy(logits, y),
    }
}

pub fn logits(c: &[Vec<f64>], o: &ReadoutWeights) -> Result<Vec<f64>> {
    if c.len() != o.num_concepts() {
        return Err(dim_err("logits concepts/readouts", &[c.len()], &[o.num_concepts()]));
    }
    c.iter()
        .zip(&o.o)
        .map(|(cj, oj)| {
            if cj.len() != oj.len() {
                return Err(dim_err("logits", &[cj.len()], oj.shape()));
            }
            Ok(dot(oj.data(), cj))
        })
        .collect()
}

pub fn predict(logits: &[f64], task: Task) -> Result<Prediction> {
    if logits.is_empty() {
        return Err(Error::Dimension("no logits".into()));
    }
    let probabilities = match task {
        Task::Multiclass => Tensor::vector(logits.to_vec())?.softmax()?.into_data(),
        Task::Multilabel => logits.iter().map(|&z| sigmoid(z)).collect(),
    };
    Ok(Prediction { logits: logits.to_vec(), probabilities, task })
}

/// Cross-entropy (class target) or mean binary cross-entropy (label vector).
pub fn loss(logits: &[f64], target: &Target) -> Result<f64> {
    match target {
        Target::Class(k) => {
            if *k >= logits.len() {
                return Err(Error::Contract(format!("class index {k} out of range for {} logits", logits.len())));
            }
            Ok(log_sum_exp(logits) - logits[*k])
        }
        Target::Labels(y) => {
            if y.len() != logits.len() {
                return Err(dim_err("loss labels", &[y.len()], &[logits.len()]));
            }
            Ok(logits.iter().zip(y).map(|(&z, &t)| bce_term(z, t)).sum::<f64>() / y.len() as f64)
        }
    }
}

/// Value-level [`gam_logits_var`].
pub fn gam_logits(features: &FeatureSet, w: &RoutingWeights, o: &ReadoutWeights) -> Result<Vec<f64>> {
    let hhat = project(&features.features, w)?;
    gam_logits_from_projections(&hhat, &features.activations, o)
}

pub fn gam_logits_from_projections(hhat: &[Vec<Vec<f64>>], p: &[f64], o: &ReadoutWeights) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let h = hhat
        .iter()
        .map(|row| row.iter().map(|x| Tensor::vector(x.clone()).map(|t| tape.constant(t))).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    let pv: Vec<Var> = p.iter().map(|&x| tape.constant(Tensor::scalar(x))).collect();
    let ov = o.bind(&mut tape);
    let z = gam_logits_var(&mut tape, &h, &pv, &ov)?;
    Ok(tape.value(z).data().to_vec())
}

/// Per-feature logit terms `p_i r_ij ⟨o_j, ĥ_ij⟩` as a `[i][j]` matrix.
pub fn contribution_terms(p: &[f64], r: &[Vec<f64>], hhat: &[Vec<Vec<f64>>], o: &ReadoutWeights) -> Vec<Vec<f64>> {
    hhat.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, h)| p[i] * r[i][j] * dot(o.o[j].data(), h)).collect())
        .collect()
}

/// Largest gap between each logit and the sum of its per-feature terms.
pub fn decomposition_gap(logits: &[f64], terms: &[Vec<f64>]) -> f64 {
    logits
        .iter()
        .enumerate()
        .map(|(j, &z)| (z - terms.iter().map(|row| row[j]).sum::<f64>()).abs())
        .fold(0.0, f64::max)
}

/// Projections on a tape for the GAM path.
pub(crate) fn gam_forward(tape: &mut Tape, fv: &FeatureVars, w: &[Var], o: &[Var]) -> Result<(Vec<Vec<Var>>, Var)> {
    let hhat = project_var(tape, &fv.f, w, o.len())?;
    let z = gam_logits_var(tape, &hhat, &fv.p, o)?;
    Ok((hhat, z))
}
