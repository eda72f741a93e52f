//! Datasets: the JSON-lines sample format, its manifest, label transforms,
//! and a generator for planted synthetic tasks.
//!
//! One sample per line:
//!
//! ```text
//! {"id":"s000001","a":[[...],...],"v":[[...]],"t":[[...]],"label":3}
//! ```
//!
//! `label` is a sentiment score in `[-3, 3]`, six emotion scores, or a
//! class index, as declared by the manifest's `label_format`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoders::{FeatureIndex, Modality, ModalityDims, ModalitySequence};
use crate::error::{Error, Result};
use crate::head::{Target, Task};

pub const EMOTIONS: [&str; 6] = ["happy", "sad", "angry", "fear", "disgust", "surprise"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelFormat {
    /// Integer score in `[-3, 3]`, seven classes.
    Sentiment,
    /// Six emotion intensities, thresholded into a multilabel target.
    Emotion,
    /// Plain class index in `[0, J)`.
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    pub num_labels: usize,
    pub label_format: LabelFormat,
    pub dims: ModalityDims,
    #[serde(default)]
    pub splits: BTreeMap<String, usize>,
    pub source: Source,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.num_labels < 2 {
            return Err(Error::Validation(format!("num_labels must be at least 2, got {}", self.num_labels)));
        }
        if self.dims.a == 0 || self.dims.v == 0 || self.dims.t == 0 {
            return Err(Error::Validation(format!("modality dims must be positive: {:?}", self.dims)));
        }
        let ok = match self.label_format {
            LabelFormat::Sentiment => self.task == Task::Multiclass && self.num_labels == 7,
            LabelFormat::Emotion => self.task == Task::Multilabel && self.num_labels == EMOTIONS.len(),
            LabelFormat::Class => self.task == Task::Multiclass,
        };
        if !ok {
            return Err(Error::Validation(format!(
                "label format {:?} is incompatible with task {} and {} labels",
                self.label_format, self.task, self.num_labels
            )));
        }
        Ok(())
    }

    /// Column names for reports.
    pub fn label_names(&self) -> Vec<String> {
        match self.label_format {
            LabelFormat::Sentiment => (-3..=3).map(|s: i32| s.to_string()).collect(),
            LabelFormat::Emotion => EMOTIONS.iter().map(|s| s.to_string()).collect(),
            LabelFormat::Class => (0..self.num_labels).map(|k| k.to_string()).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `data.jsonl` → `data.manifest.json`.
pub fn manifest_path_for(data: &Path) -> PathBuf {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    data.with_file_name(format!("{stem}.manifest.json"))
}

/// Label payload as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawLabel {
    Integer(i64),
    Scores(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub a: ModalitySequence,
    pub v: ModalitySequence,
    pub t: ModalitySequence,
    pub label: RawLabel,
}

impl Sample {
    pub fn sequences(&self) -> [&ModalitySequence; 3] {
        [&self.a, &self.v, &self.t]
    }

    /// The training target under the manifest's label format.
    pub fn target(&self, manifest: &DatasetManifest) -> Result<Target> {
        match (&self.label, manifest.label_format) {
            (RawLabel::Integer(s), LabelFormat::Sentiment) => Ok(Target::Class(sentiment_class_transform(*s)?.class)),
            (RawLabel::Integer(k), LabelFormat::Class) if (0..manifest.num_labels as i64).contains(k) => {
                Ok(Target::Class(*k as usize))
            }
            (RawLabel::Scores(s), LabelFormat::Emotion) if s.len() == EMOTIONS.len() && s.iter().all(|x| x.is_finite() && *x >= 0.0) => {
                Ok(Target::Labels(emotion_label_transform(s)))
            }
            (label, format) => Err(Error::Validation(format!(
                "sample {}: label {label:?} does not fit format {format:?} with {} labels",
                self.id, manifest.num_labels
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    a: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    label: RawLabel,
}

fn check_frames(rows: &[Vec<f64>], field: &str, want: usize, line: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Validation(format!("line {line}: field {field:?} has no frames")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != want) {
        return Err(Error::Validation(format!(
            "line {line}: field {field:?} has frame width {}, manifest d_{field} is {want}",
            bad.len()
        )));
    }
    Ok(())
}

/// Reads JSON-lines samples, validating shapes and labels against `manifest`.
pub fn read_dataset(reader: impl Read, manifest: &DatasetManifest) -> Result<Vec<Sample>> {
    manifest.validate()?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        for (field, rows) in [("a", &rec.a), ("v", &rec.v), ("t", &rec.t)] {
            check_frames(rows, field, manifest.dims.get(field.parse::<Modality>()?), lineno)?;
        }
        let sample = Sample {
            a: ModalitySequence::new(Modality::A, &rec.a)?,
            v: ModalitySequence::new(Modality::V, &rec.v)?,
            t: ModalitySequence::new(Modality::T, &rec.t)?,
            id: rec.id,
            label: rec.label,
        };
        sample
            .target(manifest)
            .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<Vec<Sample>> {
    read_dataset(fs::File::open(path)?, manifest)
}

pub fn write_dataset(mut w: impl Write, samples: &[Sample]) -> Result<()> {
    for s in samples {
        let rec = SampleRecord {
            id: s.id.clone(),
            a: s.a.to_rows(),
            v: s.v.to_rows(),
            t: s.t.to_rows(),
            label: s.label.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_dataset(&mut f, samples)?;
    f.flush()?;
    Ok(())
}

/// Emotion present iff its score is strictly positive.
pub fn emotion_label_transform(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentimentClass {
    /// `score + 3`, in `0..7`.
    pub class: usize,
    /// Binary polarity; a score of 0 counts as non-negative.
    pub non_negative: bool,
}

pub fn sentiment_class_transform(score: i64) -> Result<SentimentClass> {
    if !(-3..=3).contains(&score) {
        return Err(Error::Validation(format!("sentiment score {score} outside [-3, 3]")));
    }
    Ok(SentimentClass { class: (score + 3) as usize, non_negative: score >= 0 })
}

/// Which modalities carry the label in a planted dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plant {
    Unimodal(Modality),
    Bimodal(Modality, Modality),
    Trimodal,
}

impl Plant {
    pub fn modalities(&self) -> Vec<Modality> {
        match *self {
            Plant::Unimodal(m) => vec![m],
            Plant::Bimodal(a, b) => vec![a, b],
            Plant::Trimodal => Modality::ALL.to_vec(),
        }
    }

    /// The explanatory feature that sees exactly the planted modalities.
    pub fn feature(&self) -> FeatureIndex {
        let ms = self.modalities();
        FeatureIndex::ALL
            .into_iter()
            .find(|i| i.arity() == ms.len() && ms.iter().all(|&m| i.contains(m)))
            .expect("every modality subset has a feature")
    }
}

impl fmt::Display for Plant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Plant::Unimodal(m) => write!(f, "unimodal:{m}"),
            Plant::Bimodal(a, b) => write!(f, "bimodal:{a}{b}"),
            Plant::Trimodal => f.write_str("trimodal"),
        }
    }
}

impl FromStr for Plant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("bad plant {s:?}: use unimodal:<m>, bimodal:<m1><m2> or trimodal"));
        match s.split_once(':') {
            None if s == "trimodal" => Ok(Plant::Trimodal),
            Some(("unimodal", m)) => Ok(Plant::Unimodal(m.parse().map_err(|_| bad())?)),
            Some(("bimodal", pair)) if pair.len() == 2 => {
                let a: Modality = pair[..1].parse().map_err(|_| bad())?;
                let b: Modality = pair[1..].parse().map_err(|_| bad())?;
                if a == b {
                    return Err(bad());
                }
                Ok(Plant::Bimodal(a, b))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub plant: Plant,
    pub n: usize,
    pub seq_len: usize,
    pub dims: ModalityDims,
    pub sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(plant: Plant, n: usize, sigma: f64, seed: u64) -> Self {
        Self { plant, n, seq_len: 6, dims: ModalityDims { a: 4, v: 4, t: 4 }, sigma, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Validation(format!("sigma must be a finite value >= 0, got {}", self.sigma)));
        }
        if self.n == 0 || self.seq_len == 0 {
            return Err(Error::Validation("n and seq_len must be positive".into()));
        }
        if self.dims.a == 0 || self.dims.v == 0 || self.dims.t == 0 {
            return Err(Error::Validation(format!("modality dims must be positive: {:?}", self.dims)));
        }
        Ok(())
    }
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub plant: Plant,
    pub feature: FeatureIndex,
    pub positives: usize,
}

/// Generates a balanced binary task whose label is the parity of the
/// channel-0 signs of the planted modalities.
///
/// Every channel is `σ·N(0, 1)` noise. On each planted modality, channel 0
/// additionally carries `±u` with `u ~ U(0.5, 1.5)` and an independent fair
/// sign. The label is 1 iff an odd number of planted modalities have a
/// positive time-mean on channel 0, so for two or three planted modalities
/// no strict subset of them says anything about the label.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Vec<Sample>, DatasetManifest, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let planted = spec.plant.modalities();
    let mut samples = Vec::with_capacity(spec.n);
    let mut positives = 0;
    for k in 0..spec.n {
        let mut seqs = Vec::with_capacity(3);
        let mut parity = false;
        for m in Modality::ALL {
            let d = spec.dims.get(m);
            let offset = if planted.contains(&m) {
                let u: f64 = rng.random_range(0.5..1.5);
                if rng.random::<bool>() { u } else { -u }
            } else {
                0.0
            };
            let rows: Vec<Vec<f64>> = (0..spec.seq_len)
                .map(|_| {
                    (0..d)
                        .map(|c| {
                            let noise: f64 = rng.sample(StandardNormal);
                            spec.sigma * noise + if c == 0 { offset } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            let seq = ModalitySequence::new(m, &rows)?;
            if planted.contains(&m) {
                parity ^= crate::encoders::pool(&seq)[0] > 0.0;
            }
            seqs.push(seq);
        }
        positives += parity as usize;
        let mut it = seqs.into_iter();
        samples.push(Sample {
            id: format!("s{k:06}"),
            a: it.next().unwrap(),
            v: it.next().unwrap(),
            t: it.next().unwrap(),
            label: RawLabel::Integer(parity as i64),
        });
    }
    let manifest = DatasetManifest {
        task: Task::Multiclass,
        num_labels: 2,
        label_format: LabelFormat::Class,
        dims: spec.dims,
        splits: BTreeMap::from([("train".to_string(), spec.n)]),
        source: Source::Synthetic(spec.clone()),
    };
    let truth = GroundTruth { plant: spec.plant, feature: spec.plant.feature(), positives };
    Ok((samples, manifest, truth))
}
