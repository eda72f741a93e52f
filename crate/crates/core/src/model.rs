//! The full network: encoders, routing and readout, in one of three modes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Sample;
use crate::encoders::{
    encode_all_var, EncoderParams, EncoderVars, FeatureIndex, FeatureMask, FeatureSet, FeatureVars, ModalityDims,
    Regime,
};
use crate::error::{dim_err, Error, Result};
use crate::head::{
    contribution_terms, decomposition_gap, gam_forward, logits_var, loss_var, predict, Prediction, ReadoutWeights,
    Target, Task,
};
use crate::routing::{route_var, RoutingState, RoutingVars, RoutingWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Iterative routing with the configured number of iterations.
    Routing,
    /// A single routing iteration.
    RoutingStar,
    /// Activations only, no routing coefficients.
    Gam,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Routing => "routing",
            Mode::RoutingStar => "routing-star",
            Mode::Gam => "gam",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "routing" => Ok(Mode::Routing),
            "routing-star" => Ok(Mode::RoutingStar),
            "gam" => Ok(Mode::Gam),
            _ => Err(Error::Validation(format!("unknown mode {s:?}"))),
        }
    }
}

/// Shape and behaviour of a model, independent of its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: Mode,
    pub iterations: usize,
    pub d_f: usize,
    pub d_c: usize,
    pub num_labels: usize,
    pub task: Task,
    pub dims: ModalityDims,
    #[serde(default)]
    pub features: FeatureMask,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_f == 0 || self.d_c == 0 || self.num_labels == 0 {
            return Err(Error::Validation("d_f, d_c and the label count must be positive".into()));
        }
        match self.mode {
            Mode::Routing if self.iterations < 1 => Err(Error::Validation("routing needs at least one iteration".into())),
            Mode::RoutingStar if self.iterations != 1 => {
                Err(Error::Validation(format!("routing-star runs exactly one iteration, got {}", self.iterations)))
            }
            _ => Ok(()),
        }
    }

    /// Routing iterations actually run, `None` in GAM mode.
    pub fn routing_iterations(&self) -> Option<usize> {
        match self.mode {
            Mode::Routing => Some(self.iterations),
            Mode::RoutingStar => Some(1),
            Mode::Gam => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub encoders: EncoderParams,
    pub routing: RoutingWeights,
    pub readout: ReadoutWeights,
}

/// Tape handles for every parameter.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub encoders: EncoderVars,
    pub routing: Vec<Var>,
    pub readout: Vec<Var>,
}

impl ModelVars {
    /// All parameter handles in canonical order.
    pub fn all(&self) -> Vec<Var> {
        self.encoders.vars().chain(self.routing.iter().copied()).chain(self.readout.iter().copied()).collect()
    }
}

/// One forward pass on a tape.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub features: FeatureVars,
    pub hhat: Vec<Vec<Var>>,
    pub routing: Option<RoutingVars>,
    pub logits: Var,
}

/// Plain values from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub features: FeatureSet,
    pub hhat: Vec<Vec<Vec<f64>>>,
    pub routing: Option<RoutingState>,
    pub prediction: Prediction,
}

impl Model {
    pub fn init(spec: ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let encoders = EncoderParams::init(spec.dims, spec.d_f, rng);
        let routing = RoutingWeights::init(spec.d_f, spec.d_c, spec.num_labels, rng);
        let readout = ReadoutWeights::init(spec.d_c, spec.num_labels, rng);
        Ok(Self { spec, encoders, routing, readout })
    }

    /// Parameter names in canonical order, matching [`Model::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in FeatureIndex::ALL {
            names.push(format!("encoder.{i}.proj"));
            names.push(format!("encoder.{i}.bias"));
        }
        for i in FeatureIndex::ALL {
            for j in 0..self.spec.num_labels {
                names.push(format!("routing.{i}.{j}"));
            }
        }
        for j in 0..self.spec.num_labels {
            names.push(format!("readout.{j}"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.encoders.tensors().chain(&self.routing.w).chain(&self.readout.o).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoders
            .tensors_mut()
            .chain(self.routing.w.iter_mut())
            .chain(self.readout.o.iter_mut())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Rebuilds a model from tensors listed in canonical order.
    pub fn from_tensors(spec: ModelSpec, tensors: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let j = spec.num_labels;
        let want = 2 * 7 + 7 * j + j;
        if tensors.len() != want {
            return Err(dim_err("parameter tensor count", &[tensors.len()], &[want]));
        }
        let mut it = tensors.into_iter().map(Tensor::trainable);
        let mut proj = Vec::new();
        let mut bias = Vec::new();
        for _ in 0..7 {
            proj.push(it.next().unwrap());
            bias.push(it.next().unwrap());
        }
        let encoders = EncoderParams { dims: spec.dims, d_f: spec.d_f, proj, bias };
        encoders.validate()?;
        let routing = RoutingWeights::new(spec.d_f, spec.d_c, j, it.by_ref().take(7 * j).collect())?;
        let readout = ReadoutWeights::new(it.collect())?;
        if readout.d_c != spec.d_c {
            return Err(dim_err("readout width", &[readout.d_c], &[spec.d_c]));
        }
        Ok(Self { spec, encoders, routing, readout })
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars { encoders: self.encoders.bind(tape), routing: self.routing.bind(tape), readout: self.readout.bind(tape) }
    }

    pub fn check_sample(&self, sample: &Sample) -> Result<()> {
        for x in sample.sequences() {
            let want = self.spec.dims.get(x.modality);
            if x.dim() != want {
                return Err(dim_err(&format!("sample {} modality {}", sample.id, x.modality), &[x.dim()], &[want]));
            }
        }
        Ok(())
    }

    pub fn forward_var(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        sample: &Sample,
        regime: Regime,
        rng: &mut impl Rng,
    ) -> Result<ForwardVars> {
        let features = encode_all_var(tape, sample.sequences(), &self.encoders, &vars.encoders, self.spec.features, regime, rng)?;
        match self.spec.routing_iterations() {
            Some(t) => {
                let rv = route_var(tape, &features, &vars.routing, self.spec.num_labels, t)?;
                let logits = logits_var(tape, &rv.c, &vars.readout)?;
                if cfg!(debug_assertions) {
                    self.assert_decomposition(tape, &features, &rv, logits);
                }
                Ok(ForwardVars { features, hhat: rv.hhat.clone(), routing: Some(rv), logits })
            }
            None => {
                let (hhat, logits) = gam_forward(tape, &features, &vars.routing, &vars.readout)?;
                Ok(ForwardVars { features, hhat, routing: None, logits })
            }
        }
    }

    fn assert_decomposition(&self, tape: &Tape, fv: &FeatureVars, rv: &RoutingVars, logits: Var) {
        let state = RoutingState::from_vars(tape, rv);
        let p: Vec<f64> = fv.p.iter().map(|&v| tape.value(v).data()[0]).collect();
        let z = tape.value(logits).data();
        let terms = contribution_terms(&p, &state.r, &state.hhat, &self.readout);
        let scale = z.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let gap = decomposition_gap(z, &terms);
        debug_assert!(gap < 1e-6 * scale, "logit decomposition off by {gap}");
    }

    /// Eval-mode forward pass returning every interpretable quantity.
    pub fn forward(&self, sample: &Sample) -> Result<ForwardPass> {
        self.check_sample(sample)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        // eval mode draws nothing from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fw = self.forward_var(&mut tape, &vars, sample, Regime::EVAL, &mut rng)?;
        let logits = tape.value(fw.logits).data().to_vec();
        Ok(ForwardPass {
            features: fw.features.to_feature_set(&tape),
            hhat: fw.hhat.iter().map(|row| row.iter().map(|&h| tape.value(h).data().to_vec()).collect()).collect(),
            routing: fw.routing.as_ref().map(|rv| RoutingState::from_vars(&tape, rv)),
            prediction: predict(&logits, self.spec.task)?,
        })
    }

    /// Mean loss over `batch` on a fresh tape. Returns the tape, the
    /// parameter handles and the loss node so callers can differentiate.
    pub fn batch_loss(
        &self,
        batch: &[(&Sample, &Target)],
        regime: Regime,
        rng: &mut impl Rng,
    ) -> Result<(Tape, ModelVars, Var)> {
        if batch.is_empty() {
            return Err(Error::InsufficientData("empty batch".into()));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let mut losses = Vec::with_capacity(batch.len());
        for (sample, target) in batch {
            if target.task() != self.spec.task {
                return Err(Error::Validation(format!("sample {}: target does not match task {}", sample.id, self.spec.task)));
            }
            let fw = self.forward_var(&mut tape, &vars, sample, regime, rng)?;
            losses.push(loss_var(&mut tape, fw.logits, target)?);
        }
        let all = tape.concat(&losses)?;
        let mean = tape.mean_axis0(all);
        Ok((tape, vars, mean))
    }

    /// Computes the mean batch loss and writes its gradient into every
    /// parameter's gradient slot (overwriting what was there).
    pub fn loss_and_grad(&mut self, batch: &[(&Sample, &Target)], regime: Regime, rng: &mut impl Rng) -> Result<f64> {
        let (mut tape, vars, loss) = self.batch_loss(batch, regime, rng)?;
        let value = tape.scalar(loss)?;
        tape.backward(loss)?;
        for (t, v) in self.tensors_mut().into_iter().zip(vars.all()) {
            t.grad = Some(tape.grad(v));
        }
        Ok(value)
    }
}
