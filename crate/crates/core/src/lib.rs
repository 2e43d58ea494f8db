//! Pool-based active learning for identity labeling.
//!
//! The crate selects hard unlabeled samples with an uncertainty score that
//! pits a model's identification branch against its verification branch,
//! drops redundant ones by symmetric-KL intra-diversity, and annotates the
//! survivors through ranked identity recommendations while counting every
//! comparison an annotator makes.
//!
//! Modules:
//!
//! - [`sample`], [`pool`], [`prob`], [`config`], [`rng`]: shared data model.
//! - [`model`]: linear reference model with identification and verification
//!   heads, losses and SGD training.
//! - [`selection`]: the hard-sample pipeline and the entropy, least-confidence,
//!   margin and random baselines.
//! - [`annotation`]: candidate recommendation, simulated annotators and the
//!   labeling cost ledger.
//! - [`eval`]: CMC rank-k and mAP.
//! - [`experiment`]: the select / annotate / retrain loop and multi-seed
//!   strategy comparison.
//! - [`ingest`]: JSON Lines datasets, synthetic benchmarks and checkpoints.

pub mod annotation;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod ingest;
pub mod model;
pub mod pool;
pub mod prob;
pub mod rng;
pub mod sample;
pub mod selection;

pub use config::{ExperimentConfig, MetricName, ModelConfig, TargetMetric};
pub use error::{Error, Result};
pub use model::{ModelState, TrainSummary};
pub use pool::{partition_dataset, IdentityId, IdentityLabel, LabelSource, PoolState};
pub use prob::ProbDist;
pub use rng::RngStream;
pub use sample::{Dataset, Sample, SampleId, Truth};
pub use selection::Strategy;
