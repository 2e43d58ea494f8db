//! Datasets on disk, synthetic benchmarks and experiment checkpoints.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentState;
use crate::rng::{chance, RngStream};
use crate::sample::{Dataset, Sample, Truth};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub dimension: usize,
    pub identities: usize,
    pub cameras: usize,
    pub samples_without_camera: usize,
}

impl ValidationReport {
    fn of(dataset: &Dataset) -> Self {
        let identities: HashSet<&str> = dataset.iter().map(|s| s.truth.reveal()).collect();
        let cameras: HashSet<u32> = dataset.iter().filter_map(|s| s.camera_id).collect();
        ValidationReport {
            samples: dataset.len(),
            dimension: dataset.dim(),
            identities: identities.len(),
            cameras: cameras.len(),
            samples_without_camera: dataset.iter().filter(|s| s.camera_id.is_none()).count(),
        }
    }
}

/// Parses a JSON Lines dataset, collecting every malformed line, dimension
/// mismatch and duplicate id before failing. Blank lines are skipped.
pub fn read_jsonl<R: Read>(reader: R) -> Result<(Dataset, ValidationReport)> {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    let mut dim: Option<usize> = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| LineError {
            line: line_no,
            message,
        };
        let sample: Sample = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(e) => {
                errors.push(err(format!("malformed sample: {e}")));
                continue;
            }
        };
        match dim {
            None => dim = Some(sample.dim()),
            Some(d) if d != sample.dim() => {
                errors.push(err(format!(
                    "dimension mismatch: expected {d} features, found {}",
                    sample.dim()
                )));
                continue;
            }
            _ => {}
        }
        if sample.features.iter().any(|v| !v.is_finite()) {
            errors.push(err("non-finite feature".into()));
            continue;
        }
        if !seen.insert(sample.sample_id.clone()) {
            errors.push(err(format!("duplicate sample_id `{}`", sample.sample_id)));
            continue;
        }
        samples.push(sample);
    }
    if !errors.is_empty() {
        return Err(Error::InvalidDataset(errors));
    }
    let dataset = Dataset::new(samples)?;
    let report = ValidationReport::of(&dataset);
    Ok((dataset, report))
}

pub fn ingest_dataset(path: impl AsRef<Path>) -> Result<(Dataset, ValidationReport)> {
    read_jsonl(File::open(path)?)
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in dataset.iter() {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(dataset, File::create(path)?)
}

/// Parameters of a Gaussian-cluster identity benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub identities: usize,
    pub samples_per_identity: usize,
    pub dimension: usize,
    pub intra_class_sigma: f64,
    /// Minimum distance between any two identity means.
    pub inter_class_separation: f64,
    pub camera_count: u32,
    /// Fraction of samples whose features come from another identity's
    /// cluster while keeping their own truth, emulating detection errors.
    pub noise_fraction: f64,
    /// Dimension of the subspace the identity means live in; `None` uses
    /// a quarter of `dimension` (at least 1). The remaining directions carry
    /// only intra-class noise.
    pub identity_dim: Option<usize>,
    /// Spread of the mean distribution relative to the separation: means are
    /// drawn from `N(0, (spread * separation)^2 / identity_dim)` per axis.
    pub mean_spread: f64,
    /// Norm scale of a per-camera offset added to every sample from that
    /// camera, drawn in the directions outside the identity subspace.
    pub camera_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// The standard benchmark: 50 identities x 40 samples in 32 dimensions.
    fn default() -> Self {
        SyntheticSpec {
            identities: 50,
            samples_per_identity: 40,
            dimension: 32,
            intra_class_sigma: 1.0,
            inter_class_separation: 4.0,
            camera_count: 4,
            noise_fraction: 0.05,
            identity_dim: None,
            mean_spread: 2.0,
            camera_shift: 5.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.identities == 0 || self.samples_per_identity == 0 || self.dimension == 0 || self.camera_count == 0 {
            return Err(Error::InvalidConfig("synthetic counts must be positive".into()));
        }
        if !(self.intra_class_sigma >= 0.0) || !(self.inter_class_separation >= 0.0) {
            return Err(Error::InvalidConfig("sigma and separation must be >= 0".into()));
        }
        if matches!(self.identity_dim, Some(k) if k == 0 || k > self.dimension) {
            return Err(Error::InvalidConfig("identity_dim must be in 1..=dimension".into()));
        }
        if !(self.camera_shift >= 0.0) {
            return Err(Error::InvalidConfig("camera_shift must be >= 0".into()));
        }
        if !(self.mean_spread > 0.0) {
            return Err(Error::InvalidConfig("mean_spread must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::InvalidConfig("noise_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn effective_identity_dim(&self) -> usize {
        self.identity_dim.unwrap_or((self.dimension / 4).max(1))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// Configured mean of each identity, indexed like the `person####` truth tokens.
    pub means: Vec<Vec<f64>>,
    /// Offset added to every sample seen by each camera.
    pub camera_offsets: Vec<Vec<f64>>,
}

const MAX_MEAN_ATTEMPTS: usize = 10_000;

/// Draws one isotropic Gaussian cluster per identity.
///
/// Means occupy the first `identity_dim` coordinates and are rejected until
/// every pair is at least `inter_class_separation` apart. Each identity then
/// draws its samples from its own random substream.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let d = spec.dimension;
    let k = spec.effective_identity_dim();
    let tau = (spec.mean_spread * spec.inter_class_separation).max(1.0) / (k as f64).sqrt();
    let mean_dist = Normal::new(0.0, tau).expect("finite");
    let mut mean_rng = root.substream("synthetic-means");
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.identities);
    let sep2 = spec.inter_class_separation.powi(2);
    for i in 0..spec.identities {
        let mut attempts = 0;
        let mean = loop {
            attempts += 1;
            if attempts > MAX_MEAN_ATTEMPTS {
                return Err(Error::Infeasible(format!(
                    "could not place identity {i} at separation {} in dimension {d}",
                    spec.inter_class_separation
                )));
            }
            let cand: Vec<f64> = (0..d)
                .map(|j| if j < k { mean_dist.sample(&mut mean_rng) } else { 0.0 })
                .collect();
            let ok = means.iter().all(|m| {
                m.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= sep2
            });
            if ok {
                break cand;
            }
        };
        means.push(mean);
    }

    let nuisance = d - k;
    let mut camera_rng = root.substream("synthetic-cameras");
    let offsets: Vec<Vec<f64>> = (0..spec.camera_count)
        .map(|_| {
            let sd = if nuisance == 0 { 0.0 } else { spec.camera_shift / (nuisance as f64).sqrt() };
            let dist = Normal::new(0.0, sd).expect("finite shift");
            (0..d).map(|j| if j < k { 0.0 } else { dist.sample(&mut camera_rng) }).collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.intra_class_sigma).expect("sigma >= 0");
    let per_identity: Vec<Vec<Sample>> = (0..means.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = root.substream(&format!("synthetic-identity/{i}"));
            (0..spec.samples_per_identity)
                .map(|j| {
                    let camera = rng.random_range(0..spec.camera_count);
                    let source = if spec.identities > 1 && chance(&mut rng, spec.noise_fraction) {
                        let other = rng.random_range(0..spec.identities - 1);
                        &means[if other >= i { other + 1 } else { other }]
                    } else {
                        &means[i]
                    };
                    let features = source
                        .iter()
                        .zip(&offsets[camera as usize])
                        .map(|(m, o)| m + o + noise.sample(&mut rng))
                        .collect();
                    Sample::new(
                        format!("p{i:04}_{j:03}"),
                        features,
                        Some(camera),
                        Truth::new(format!("person{i:04}")),
                    )
                })
                .collect()
        })
        .collect();
    let samples: Vec<Sample> = per_identity.into_iter().flatten().collect();
    Ok(SyntheticDataset {
        dataset: Dataset::new(samples)?,
        means,
        camera_offsets: offsets,
    })
}

/// Identity-disjoint split: a shuffled `eval_fraction` of the identities is
/// held out for evaluation. Returns `(train, eval)`; `eval` is `None` when
/// `eval_fraction` rounds to zero identities.
pub fn split_by_identity(
    dataset: &Dataset,
    eval_fraction: f64,
    rng: &RngStream,
) -> Result<(Dataset, Option<Dataset>)> {
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(Error::InvalidConfig(format!("eval_fraction {eval_fraction} not in [0, 1)")));
    }
    let truths: BTreeSet<&str> = dataset.iter().map(|s| s.truth.reveal()).collect();
    let mut truths: Vec<&str> = truths.into_iter().collect();
    truths.shuffle(&mut rng.substream("eval-split"));
    let held = ((eval_fraction * truths.len() as f64).round() as usize).min(truths.len().saturating_sub(1));
    if held == 0 {
        return Ok((dataset.clone(), None));
    }
    let eval_ids: HashSet<&str> = truths[..held].iter().copied().collect();
    let (eval, train): (Vec<Sample>, Vec<Sample>) = dataset
        .iter()
        .cloned()
        .partition(|s| eval_ids.contains(s.truth.reveal()));
    Ok((Dataset::new(train)?, Some(Dataset::new(eval)?)))
}

pub const CHECKPOINT_FORMAT: &str = "hardmine-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct CheckpointOut<'a> {
    format: &'a str,
    version: u32,
    config_hash: String,
    state: &'a ExperimentState,
}

#[derive(Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    config_hash: String,
}

#[derive(Deserialize)]
struct CheckpointIn {
    state: ExperimentState,
}

pub fn checkpoint_to_vec(state: &ExperimentState) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(&CheckpointOut {
        format: CHECKPOINT_FORMAT,
        version: CHECKPOINT_VERSION,
        config_hash: state.config().hash(),
        state,
    })?)
}

pub fn checkpoint_from_slice(bytes: &[u8]) -> Result<ExperimentState> {
    let corrupt = |e: serde_json::Error| Error::Checkpoint(format!("corrupt file: {e}"));
    let header: CheckpointHeader = serde_json::from_slice(bytes).map_err(corrupt)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("not a checkpoint (format `{}`)", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version mismatch: file has {}, expected {CHECKPOINT_VERSION}",
            header.version
        )));
    }
    let CheckpointIn { state } = serde_json::from_slice(bytes).map_err(corrupt)?;
    if state.config().hash() != header.config_hash {
        return Err(Error::Checkpoint("config hash does not match stored config".into()));
    }
    Ok(state)
}

/// Writes the checkpoint atomically (temporary file, then rename).
pub fn checkpoint_save(state: &ExperimentState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, checkpoint_to_vec(state)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<ExperimentState> {
    checkpoint_from_slice(&fs::read(path)?)
}

/// Per-identity empirical feature means, keyed by truth token.
pub fn empirical_means(dataset: &Dataset) -> BTreeMap<String, Vec<f64>> {
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for s in dataset.iter() {
        let e = sums
            .entry(s.truth.reveal().to_owned())
            .or_insert_with(|| (vec![0.0; s.dim()], 0));
        e.0.iter_mut().zip(&s.features).for_each(|(a, v)| *a += v);
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (sum, n))| (k, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}
