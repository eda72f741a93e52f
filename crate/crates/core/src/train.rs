//! Epoch loop, evaluation and the training log.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState};
use crate::data::{DatasetManifest, LabelFormat, Sample};
use crate::encoders::{FeatureMask, ModalityDims, Regime};
use crate::error::{Error, Result};
use crate::head::{Target, Task};
use crate::interpret::{GlobalStats, GroupBy};
use crate::metrics::{EvalResult, F1Average};
use crate::model::{Mode, Model, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub d_f: usize,
    pub d_c: usize,
    pub num_labels: usize,
    pub task: Task,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    #[serde(default)]
    pub features: FeatureMask,
}

impl TrainConfig {
    /// Defaults for a dataset with `num_labels` labels under `task`.
    pub fn new(num_labels: usize, task: Task) -> Self {
        Self {
            mode: Mode::Routing,
            iterations: 2,
            d_f: 64,
            d_c: 64,
            num_labels,
            task,
            lr: 1e-4,
            batch_size: 32,
            epochs: 10,
            dropout: 0.5,
            seed: 0,
            features: FeatureMask::All,
        }
    }

    pub fn for_manifest(manifest: &DatasetManifest) -> Self {
        Self::new(manifest.num_labels, manifest.task)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec(ModalityDims { a: 1, v: 1, t: 1 }).validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn model_spec(&self, dims: ModalityDims) -> ModelSpec {
        ModelSpec {
            mode: self.mode,
            iterations: self.iterations,
            d_f: self.d_f,
            d_c: self.d_c,
            num_labels: self.num_labels,
            task: self.task,
            dims,
            features: self.features,
        }
    }

    /// One `key=value` pair per field, space separated.
    pub fn resolved(&self) -> String {
        format!(
            "mode={} iters={} d_f={} d_c={} labels={} task={} lr={} batch={} epochs={} dropout={} seed={} features={}",
            self.mode,
            self.iterations,
            self.d_f,
            self.d_c,
            self.num_labels,
            self.task,
            self.lr,
            self.batch_size,
            self.epochs,
            self.dropout,
            self.seed,
            match self.features {
                FeatureMask::All => "all",
                FeatureMask::Unimodal => "unimodal",
            }
        )
    }

    fn check_manifest(&self, manifest: &DatasetManifest) -> Result<()> {
        if manifest.num_labels != self.num_labels || manifest.task != self.task {
            return Err(Error::Validation(format!(
                "config expects {} {} labels, dataset has {} {}",
                self.num_labels, self.task, manifest.num_labels, manifest.task
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

/// Renders the log as `epoch,loss,train_acc` CSV.
pub fn render_log_csv(log: &[EpochLog]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "loss", "train_acc"])?;
    for e in log {
        w.write_record([e.epoch.to_string(), e.loss.to_string(), e.train_acc.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Position of a [`ChaCha8Rng`] stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// Decimal, since JSON numbers cannot carry 128 bits.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        Self { seed, word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad rng position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// A trained (or freshly initialised) model with the state needed to
/// reproduce or continue its run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Model,
    pub rng: RngState,
    pub epoch: usize,
}

fn targets(samples: &[Sample], manifest: &DatasetManifest) -> Result<Vec<Target>> {
    samples.iter().map(|s| s.target(manifest)).collect()
}

/// Runs `config.epochs` epochs of Adam on `samples`.
pub fn train(config: &TrainConfig, samples: &[Sample], manifest: &DatasetManifest) -> Result<(Checkpoint, Vec<EpochLog>)> {
    config.validate()?;
    manifest.validate()?;
    config.check_manifest(manifest)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(config.model_spec(manifest.dims), &mut rng)?;
    for s in samples {
        model.check_sample(s)?;
    }
    let targets = targets(samples, manifest)?;
    if config.epochs > 0 && samples.is_empty() {
        return Err(Error::InsufficientData("cannot train on an empty dataset".into()));
    }
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, &sizes);
    let regime = Regime::training(config.dropout);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&Sample, &Target)> = chunk.iter().map(|&k| (&samples[k], &targets[k])).collect();
            let loss = model.loss_and_grad(&batch, regime, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss {loss} in epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut model.tensors_mut())?;
            if model.tensors().iter().any(|t| !t.is_finite()) {
                return Err(Error::Numerical(format!("parameters became non-finite in epoch {epoch}")));
            }
        }
        let result = evaluate_with(&model, samples, &targets, manifest, F1Average::default(), None)?.0;
        log.push(EpochLog { epoch, loss: total / samples.len() as f64, train_acc: result.accuracy() });
    }
    for t in model.tensors_mut() {
        t.grad = None;
    }
    let rng = RngState::capture(config.seed, &rng);
    Ok((Checkpoint { config: config.clone(), model, rng, epoch: config.epochs }, log))
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub f1_average: F1Average,
    /// Accumulate interpretation statistics with this grouping.
    pub stats: Option<GroupBy>,
}

/// Eval-mode pass over `samples`.
pub fn evaluate(
    model: &Model,
    samples: &[Sample],
    manifest: &DatasetManifest,
    options: EvalOptions,
) -> Result<(EvalResult, Option<GlobalStats>)> {
    manifest.validate()?;
    if manifest.num_labels != model.spec.num_labels || manifest.task != model.spec.task || manifest.dims != model.spec.dims {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} {} labels with dims {:?}, dataset has {} {} with {:?}",
            model.spec.num_labels, model.spec.task, model.spec.dims, manifest.num_labels, manifest.task, manifest.dims
        )));
    }
    let targets = targets(samples, manifest)?;
    evaluate_with(model, samples, &targets, manifest, options.f1_average, options.stats)
}

fn evaluate_with(
    model: &Model,
    samples: &[Sample],
    targets: &[Target],
    manifest: &DatasetManifest,
    average: F1Average,
    group: Option<GroupBy>,
) -> Result<(EvalResult, Option<GlobalStats>)> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate an empty dataset".into()));
    }
    let mut stats = group.map(|g| GlobalStats::new(model.spec.num_labels, g));
    let mut classes = (Vec::new(), Vec::new());
    let mut labels = (Vec::new(), Vec::new());
    for (s, t) in samples.iter().zip(targets) {
        let fw = model.forward(s)?;
        if let Some(st) = stats.as_mut() {
            st.accumulate(&fw, t)?;
        }
        match t {
            Target::Class(k) => {
                classes.0.push(fw.prediction.argmax());
                classes.1.push(*k);
            }
            Target::Labels(y) => {
                labels.0.push(fw.prediction.active_labels().iter().map(|&v| v > 0.5).collect::<Vec<_>>());
                labels.1.push(y.iter().map(|&v| v > 0.5).collect::<Vec<_>>());
            }
        }
    }
    let result = match model.spec.task {
        Task::Multiclass => EvalResult::multiclass(
            &classes.0,
            &classes.1,
            model.spec.num_labels,
            average,
            manifest.label_format == LabelFormat::Sentiment,
        )?,
        Task::Multilabel => EvalResult::multilabel(&labels.0, &labels.1, &manifest.label_names())?,
    };
    Ok((result, stats))
}
