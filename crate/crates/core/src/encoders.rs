//! Encoding stage: raw modality sequences to the seven explanatory
//! features `f_i` and their activations `p_i`.
//!
//! Each index set `i` owns one affine head of width `d_f + 1` over the
//! mean-pooled frames of its constituent modalities. The first `d_f`
//! outputs pass through `tanh` to give `f_i`, the last through a sigmoid
//! to give `p_i`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    A,
    V,
    T,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::A, Modality::V, Modality::T];

    pub fn name(self) -> &'static str {
        match self {
            Modality::A => "a",
            Modality::V => "v",
            Modality::T => "t",
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Modality::A),
            "v" => Ok(Modality::V),
            "t" => Ok(Modality::T),
            _ => Err(Error::Validation(format!("unknown modality {s:?} (expected a, v or t)"))),
        }
    }
}

/// One of the seven explanatory index sets, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureIndex {
    A,
    V,
    T,
    AV,
    VT,
    TA,
    AVT,
}

pub const NUM_FEATURES: usize = 7;

impl FeatureIndex {
    pub const ALL: [FeatureIndex; NUM_FEATURES] = [
        FeatureIndex::A,
        FeatureIndex::V,
        FeatureIndex::T,
        FeatureIndex::AV,
        FeatureIndex::VT,
        FeatureIndex::TA,
        FeatureIndex::AVT,
    ];

    /// Constituent modalities, in the order their pooled vectors are concatenated.
    pub fn modalities(self) -> &'static [Modality] {
        use Modality::*;
        match self {
            FeatureIndex::A => &[A],
            FeatureIndex::V => &[V],
            FeatureIndex::T => &[T],
            FeatureIndex::AV => &[A, V],
            FeatureIndex::VT => &[V, T],
            FeatureIndex::TA => &[T, A],
            FeatureIndex::AVT => &[A, V, T],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureIndex::A => "a",
            FeatureIndex::V => "v",
            FeatureIndex::T => "t",
            FeatureIndex::AV => "av",
            FeatureIndex::VT => "vt",
            FeatureIndex::TA => "ta",
            FeatureIndex::AVT => "avt",
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }

    pub fn arity(self) -> usize {
        self.modalities().len()
    }

    pub fn contains(self, m: Modality) -> bool {
        self.modalities().contains(&m)
    }
}

impl fmt::Display for FeatureIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureIndex::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown feature {s:?}")))
    }
}

/// Which explanatory features take part in a model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMask {
    #[default]
    All,
    Unimodal,
}

impl FeatureMask {
    pub fn includes(self, i: FeatureIndex) -> bool {
        match self {
            FeatureMask::All => true,
            FeatureMask::Unimodal => i.arity() == 1,
        }
    }
}

impl FromStr for FeatureMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureMask::All),
            "unimodal" => Ok(FeatureMask::Unimodal),
            _ => Err(Error::Validation(format!("unknown feature mask {s:?}"))),
        }
    }
}

/// Per-frame widths of the three modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityDims {
    pub a: usize,
    pub v: usize,
    pub t: usize,
}

impl ModalityDims {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::A => self.a,
            Modality::V => self.v,
            Modality::T => self.t,
        }
    }

    /// Width of the concatenated pooled input seen by feature `i`.
    pub fn input_width(&self, i: FeatureIndex) -> usize {
        i.modalities().iter().map(|&m| self.get(m)).sum()
    }
}

/// A `T × d` sequence of frames for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalitySequence {
    pub modality: Modality,
    frames: Tensor,
}

impl ModalitySequence {
    pub fn new(modality: Modality, frames: &[Vec<f64>]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Contract(format!("modality {modality} has no frames")));
        }
        let frames = Tensor::from_rows(frames)?;
        if !frames.is_finite() {
            return Err(Error::Validation(format!("modality {modality} has non-finite frames")));
        }
        Ok(Self { modality, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.frames.data().chunks(self.dim()).map(<[f64]>::to_vec).collect()
    }
}

/// Mean over the time axis.
pub fn pool(x: &ModalitySequence) -> Vec<f64> {
    x.frames.mean_axis0().into_data()
}

/// The seven explanatory features and activations of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<Vec<f64>>,
    pub activations: Vec<f64>,
}

impl FeatureSet {
    pub fn new(features: Vec<Vec<f64>>, activations: Vec<f64>) -> Result<Self> {
        if features.len() != NUM_FEATURES || activations.len() != NUM_FEATURES {
            return Err(Error::Dimension(format!(
                "a feature set has exactly {NUM_FEATURES} entries, got {} features / {} activations",
                features.len(),
                activations.len()
            )));
        }
        let d_f = features[0].len();
        if d_f == 0 || features.iter().any(|f| f.len() != d_f) {
            return Err(Error::Dimension("features must share one positive width".into()));
        }
        if activations.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation("activations must lie in [0, 1]".into()));
        }
        Ok(Self { features, activations })
    }

    pub fn d_f(&self) -> usize {
        self.features[0].len()
    }

    pub fn feature(&self, i: FeatureIndex) -> &[f64] {
        &self.features[i.position()]
    }

    pub fn activation(&self, i: FeatureIndex) -> f64 {
        self.activations[i.position()]
    }

    /// Lifts the set onto a tape as constants.
    pub fn to_vars(&self, tape: &mut Tape) -> FeatureVars {
        FeatureVars {
            f: self.features.iter().map(|f| tape.constant(Tensor::vector(f.clone()).unwrap())).collect(),
            p: self.activations.iter().map(|&p| tape.constant(Tensor::scalar(p))).collect(),
        }
    }
}

/// Tape handles for the seven features (`[d_f]`) and activations (`[1]`).
#[derive(Debug, Clone)]
pub struct FeatureVars {
    pub f: Vec<Var>,
    pub p: Vec<Var>,
}

impl FeatureVars {
    pub fn to_feature_set(&self, tape: &Tape) -> FeatureSet {
        FeatureSet {
            features: self.f.iter().map(|&v| tape.value(v).data().to_vec()).collect(),
            activations: self.p.iter().map(|&v| tape.value(v).data()[0]).collect(),
        }
    }
}

/// One affine head per index set, mapping pooled inputs to `d_f + 1` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dims: ModalityDims,
    pub d_f: usize,
    /// `[input_width(i), d_f + 1]` per index set.
    pub proj: Vec<Tensor>,
    /// `[d_f + 1]` per index set.
    pub bias: Vec<Tensor>,
}

impl EncoderParams {
    /// Uniform init in `±1/√fan_in`.
    pub fn init(dims: ModalityDims, d_f: usize, rng: &mut impl Rng) -> Self {
        let mut proj = Vec::with_capacity(NUM_FEATURES);
        let mut bias = Vec::with_capacity(NUM_FEATURES);
        for i in FeatureIndex::ALL {
            let fan_in = dims.input_width(i);
            let bound = 1.0 / (fan_in as f64).sqrt();
            proj.push(Tensor::uniform(&[fan_in, d_f + 1], bound, rng).trainable());
            bias.push(Tensor::uniform(&[d_f + 1], bound, rng).trainable());
        }
        Self { dims, d_f, proj, bias }
    }

    pub fn zeros(dims: ModalityDims, d_f: usize) -> Self {
        Self {
            dims,
            d_f,
            proj: FeatureIndex::ALL.iter().map(|&i| Tensor::zeros(&[dims.input_width(i), d_f + 1]).trainable()).collect(),
            bias: FeatureIndex::ALL.iter().map(|_| Tensor::zeros(&[d_f + 1]).trainable()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in FeatureIndex::ALL {
            let want = [self.dims.input_width(i), self.d_f + 1];
            let (p, b) = (&self.proj[i.position()], &self.bias[i.position()]);
            if p.shape() != want || b.shape() != [self.d_f + 1] {
                return Err(dim_err(&format!("encoder {i}"), p.shape(), &want));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            proj: self.proj.iter().map(|t| tape.param(t)).collect(),
            bias: self.bias.iter().map(|t| tape.param(t)).collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.proj.iter().zip(&self.bias).flat_map(|(p, b)| [p, b])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.proj.iter_mut().zip(self.bias.iter_mut()).flat_map(|(p, b)| [p, b])
    }
}

#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub proj: Vec<Var>,
    pub bias: Vec<Var>,
}

impl EncoderVars {
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.proj.iter().zip(&self.bias).flat_map(|(&p, &b)| [p, b])
    }
}

/// Dropout setting for the encoder hidden activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub training: bool,
    pub dropout: f64,
}

impl Regime {
    pub const EVAL: Regime = Regime { training: false, dropout: 0.0 };

    pub fn training(dropout: f64) -> Self {
        Self { training: true, dropout }
    }
}

/// Encodes one index set from the pooled vectors of its modalities.
pub fn encode_one_var(
    tape: &mut Tape,
    i: FeatureIndex,
    pooled: &[Var],
    vars: &EncoderVars,
    d_f: usize,
    regime: Regime,
    rng: &mut impl Rng,
) -> Result<(Var, Var)> {
    if pooled.len() != i.arity() {
        return Err(Error::Dimension(format!("feature {i} needs {} pooled inputs, got {}", i.arity(), pooled.len())));
    }
    let x = if pooled.len() == 1 { pooled[0] } else { tape.concat(pooled)? };
    let h = tape.matmul(x, vars.proj[i.position()])?;
    let h = tape.add(h, vars.bias[i.position()])?;
    let hf = tape.slice(h, 0, d_f)?;
    let hf = tape.dropout(hf, regime.dropout, regime.training, rng)?;
    let f = tape.tanh(hf);
    let hp = tape.slice(h, d_f, 1)?;
    let p = tape.sigmoid(hp);
    Ok((f, p))
}

/// Encodes all seven index sets. Features excluded by `mask` are not
/// evaluated: they come out as zero vectors with activation 0.
pub fn encode_all_var(
    tape: &mut Tape,
    inputs: [&ModalitySequence; 3],
    params: &EncoderParams,
    vars: &EncoderVars,
    mask: FeatureMask,
    regime: Regime,
    rng: &mut impl Rng,
) -> Result<FeatureVars> {
    for (m, x) in Modality::ALL.into_iter().zip(inputs) {
        if x.modality != m {
            return Err(Error::Contract(format!("expected modality {m}, got {}", x.modality)));
        }
        if x.dim() != params.dims.get(m) {
            return Err(dim_err(&format!("modality {m} frame width"), &[x.dim()], &[params.dims.get(m)]));
        }
    }
    let pooled: Vec<Var> = inputs.iter().map(|x| tape.constant(Tensor::vector(pool(x)).unwrap())).collect();
    let mut f = Vec::with_capacity(NUM_FEATURES);
    let mut p = Vec::with_capacity(NUM_FEATURES);
    for i in FeatureIndex::ALL {
        if mask.includes(i) {
            let ins: Vec<Var> = i.modalities().iter().map(|m| pooled[m.position()]).collect();
            let (fi, pi) = encode_one_var(tape, i, &ins, vars, params.d_f, regime, rng)?;
            f.push(fi);
            p.push(pi);
        } else {
            f.push(tape.constant(Tensor::zeros(&[params.d_f])));
            p.push(tape.constant(Tensor::scalar(0.0)));
        }
    }
    Ok(FeatureVars { f, p })
}

/// Value-level [`encode_one_var`].
pub fn encode_one(
    i: FeatureIndex,
    pooled: &[&[f64]],
    params: &EncoderParams,
    regime: Regime,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, f64)> {
    let want = params.dims.input_width(i);
    let got: usize = pooled.iter().map(|p| p.len()).sum();
    if got != want {
        return Err(dim_err(&format!("encoder {i} input width"), &[got], &[want]));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let ins: Vec<Var> = pooled.iter().map(|p| tape.constant(Tensor::vector(p.to_vec()).unwrap())).collect();
    let (f, p) = encode_one_var(&mut tape, i, &ins, &vars, params.d_f, regime, rng)?;
    Ok((tape.value(f).data().to_vec(), tape.scalar(p)?))
}

/// Value-level [`encode_all_var`] over all seven features.
pub fn encode_all(
    x_a: &ModalitySequence,
    x_v: &ModalitySequence,
    x_t: &ModalitySequence,
    params: &EncoderParams,
    regime: Regime,
    rng: &mut impl Rng,
) -> Result<FeatureSet> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let fv = encode_all_var(&mut tape, [x_a, x_v, x_t], params, &vars, FeatureMask::All, regime, rng)?;
    Ok(fv.to_feature_set(&tape))
}
