//! Auxiliary-information fusion for person re-identification features.
//!
//! The crate ingests per-sample feature blocks ([`store`]), trains
//! concatenation and attention fusion heads with an identity classifier
//! ([`fusion`], [`trainer`]), derives trajectory features with an LSTM
//! predictor ([`trajectory`]), scores query/gallery retrieval
//! ([`retrieval`]), explains classifier decisions with Integrated Gradients
//! ([`attribution`]) and runs repeated-split ablation experiments
//! ([`experiment`]).

pub mod attribution;
pub mod error;
pub mod experiment;
pub mod fusion;
mod jsonio;
pub mod numerics;
pub mod retrieval;
pub mod store;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
pub use fusion::{FusionConfig, FusionLayout, FusionMode, FusionModel};
pub use store::{Dataset, FeatureRecord, Split};
