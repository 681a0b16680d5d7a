//! Human-error-aware active learning over annotated data streams.
//!
//! The crate simulates an annotator whose labelling accuracy decays with the
//! time since it last saw a class (a sigmoid forgetting curve), and compares
//! three ways of choosing which stream items to send to that annotator:
//! random sampling, uncertainty sampling, and an error-mitigating sampler that
//! skips the class most likely to damage the model.
//!
//! Module map:
//!
//! * [`stream`]: dataset ingestion, splitting, interval planning, synthetic streams
//! * [`features`]: averaged word embeddings and hashed bag-of-words
//! * [`learner`]: softmax linear model trained by SGD, plus ROC AUC in [`learner::auc`]
//! * [`oracle`]: forgetting curve, simulated annotator, curve fitting
//! * [`sampling`]: uncertainty region, context window, error matrix, discard scores
//! * [`schedule`]: crowd annotation schedules and position error analysis
//! * [`runner`]: experiment configuration, interval loop, sweeps, output
//!
//! Data-parallel loops go through [`par`]; building without the default
//! `parallel` feature gives a purely sequential crate with identical results.

pub mod error;
pub mod features;
pub mod learner;
pub mod oracle;
pub mod par;
mod rng;
pub mod runner;
pub mod sampling;
pub mod schedule;
pub mod stream;

pub use error::{Error, Result};
pub use features::{FeatureVector, FeaturedInstance, Featurizer};
pub use learner::{LinearModel, Prediction};
pub use oracle::{ForgettingParams, OracleRegime, OracleState};
pub use runner::{ExperimentConfig, IntervalMetrics, RunReport};
pub use sampling::{ContextWindow, ErrorMatrix, SamplerKind};
pub use stream::{ClassId, ClassSet, Dataset, Instance};
