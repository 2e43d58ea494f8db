//! Samples and datasets.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub String);

impl SampleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SampleId {
    fn from(s: &str) -> Self {
        SampleId(s.to_owned())
    }
}

impl From<String> for SampleId {
    fn from(s: String) -> Self {
        SampleId(s)
    }
}

/// Hidden ground-truth identity of a sample.
///
/// The token is only readable inside the crate through [`Truth::reveal`], which
/// is reserved for the simulated annotator, the evaluator and dataset
/// bootstrapping. Model and selection code must never call it; a source audit
/// test enforces this, and [`TruthSeal`] turns violations into panics at
/// runtime.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Truth(String);

impl Truth {
    pub fn new(token: impl Into<String>) -> Self {
        Truth(token.into())
    }

    pub(crate) fn reveal(&self) -> &str {
        assert!(
            !TruthSeal::is_active(),
            "ground truth read inside a sealed model/selection code path"
        );
        &self.0
    }
}

impl fmt::Debug for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Truth(..)")
    }
}

thread_local! {
    static SEAL_DEPTH: std::cell::Cell<u32> = const { std::cell::Cell::new(0) };
}

/// RAII guard marking the current thread as running model or selection code.
pub(crate) struct TruthSeal(());

impl TruthSeal {
    pub(crate) fn enter() -> Self {
        SEAL_DEPTH.with(|d| d.set(d.get() + 1));
        TruthSeal(())
    }

    pub(crate) fn is_active() -> bool {
        SEAL_DEPTH.with(|d| d.get() > 0)
    }
}

impl Drop for TruthSeal {
    fn drop(&mut self) {
        SEAL_DEPTH.with(|d| d.set(d.get() - 1));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: SampleId,
    pub camera_id: Option<u32>,
    pub truth: Truth,
    pub features: Vec<f64>,
}

impl Sample {
    pub fn new(
        sample_id: impl Into<SampleId>,
        features: Vec<f64>,
        camera_id: Option<u32>,
        truth: Truth,
    ) -> Self {
        Sample {
            sample_id: sample_id.into(),
            camera_id,
            truth,
            features,
        }
    }

    /// A truthless sample at arbitrary coordinates, e.g. a class center.
    pub fn synthetic(sample_id: impl Into<SampleId>, features: Vec<f64>) -> Self {
        Sample::new(sample_id, features, None, Truth::new(""))
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// An ordered collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    index: HashMap<SampleId, usize>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples.first().ok_or(Error::EmptyDataset)?.dim();
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.dim(),
                });
            }
            if index.insert(s.sample_id.clone(), i).is_some() {
                return Err(Error::DuplicateSample(s.sample_id.0.clone()));
            }
        }
        Ok(Dataset {
            samples,
            dim,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn get(&self, id: &SampleId) -> Result<&Sample> {
        self.index
            .get(id)
            .map(|&i| &self.samples[i])
            .ok_or_else(|| Error::UnknownSample(id.0.clone()))
    }

    pub fn contains(&self, id: &SampleId) -> bool {
        self.index.contains_key(id)
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}
