#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use routecap::data::{DatasetManifest, LabelFormat, RawLabel, Sample, Source};
use routecap::encoders::{Modality, ModalityDims, ModalitySequence};
use routecap::head::Task;

pub fn random_frames(rng: &mut ChaCha8Rng, len: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

pub fn random_sample(rng: &mut ChaCha8Rng, dims: ModalityDims, id: usize, label: RawLabel) -> Sample {
    let len = rng.random_range(1..6);
    let seq = |rng: &mut ChaCha8Rng, m: Modality| {
        ModalitySequence::new(m, &random_frames(rng, len, dims.get(m), 2.0)).unwrap()
    };
    Sample {
        id: format!("r{id:05}"),
        a: seq(rng, Modality::A),
        v: seq(rng, Modality::V),
        t: seq(rng, Modality::T),
        label,
    }
}

/// A random 7-class sentiment dataset.
pub fn sentiment_dataset(rng: &mut ChaCha8Rng, n: usize, dims: ModalityDims) -> (Vec<Sample>, DatasetManifest) {
    let samples = (0..n).map(|k| {
        let score = rng.random_range(-3..=3);
        random_sample(rng, dims, k, RawLabel::Integer(score))
    });
    let manifest = DatasetManifest {
        task: Task::Multiclass,
        num_labels: 7,
        label_format: LabelFormat::Sentiment,
        dims,
        splits: BTreeMap::from([("train".to_string(), n)]),
        source: Source::File(PathBuf::from("sentiment.jsonl")),
    };
    (samples.collect(), manifest)
}

/// A random 6-label emotion dataset.
pub fn emotion_dataset(rng: &mut ChaCha8Rng, n: usize, dims: ModalityDims) -> (Vec<Sample>, DatasetManifest) {
    let samples = (0..n).map(|k| {
        let scores = (0..6).map(|_| if rng.random_bool(0.3) { rng.random_range(0.1..3.0) } else { 0.0 }).collect();
        random_sample(rng, dims, k, RawLabel::Scores(scores))
    });
    let manifest = DatasetManifest {
        task: Task::Multilabel,
        num_labels: 6,
        label_format: LabelFormat::Emotion,
        dims,
        splits: BTreeMap::from([("train".to_string(), n)]),
        source: Source::File(PathBuf::from("emotion.jsonl")),
    };
    (samples.collect(), manifest)
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_routecap")
}
