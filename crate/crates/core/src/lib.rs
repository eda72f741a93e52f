//! Interpretable multimodal classification by routing.
//!
//! Three input modalities (acoustic `a`, visual `v`, textual `t`) are pooled
//! and encoded into seven explanatory features, one per non-empty subset of
//! modalities. Each feature carries a vector `f_i` and an activation `p_i`.
//! Features are projected once per output concept, `ĥ_ij = f_i W_ij`, and a
//! few routing iterations decide how much of each feature flows to each
//! concept. The logit of concept `j` then splits exactly into per-feature
//! terms:
//!
//! ```text
//! logit_j = Σ_i p_i · r_ij · ⟨o_j, ĥ_ij⟩
//! ```
//!
//! so `p_i · r_ij` explains a single prediction, and confidence intervals of
//! its dataset mean explain the model as a whole.
//!
//! ```
//! use routecap::data::{gen_synthetic, Plant, SyntheticSpec};
//! use routecap::model::Mode;
//! use routecap::train::{evaluate, train, EvalOptions, TrainConfig};
//!
//! let (samples, manifest, _) =
//!     gen_synthetic(&SyntheticSpec::new("unimodal:a".parse::<Plant>()?, 64, 0.1, 7))?;
//! let config = TrainConfig {
//!     mode: Mode::Routing,
//!     d_f: 8,
//!     d_c: 8,
//!     epochs: 2,
//!     ..TrainConfig::for_manifest(&manifest)
//! };
//! let (checkpoint, log) = train(&config, &samples, &manifest)?;
//! assert_eq!(log.len(), 2);
//! let (result, _) = evaluate(&checkpoint.model, &samples, &manifest, EvalOptions::default())?;
//! assert!((0.0..=1.0).contains(&result.accuracy()));
//! # Ok::<(), routecap::Error>(())
//! ```

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod encoders;
mod error;
pub mod head;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod routing;
pub mod train;

pub use error::{Error, Result};

// The guide's code listings are compiled and run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    pub mod encoding {}
    #[doc = include_str!("../../../book/src/routing.md")]
    pub mod routing {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    pub mod decomposition {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    pub mod statistics {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub mod autodiff {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
