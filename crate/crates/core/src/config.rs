use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Retrieval metric usable as a stopping target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Rank1,
    Rank5,
    Rank10,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetric {
    pub metric: MetricName,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width; `None` uses the feature dimension.
    pub embed_dim: Option<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Negative pairs drawn per positive pair for the verification loss.
    pub negatives_per_positive: usize,
    pub verification_weight: f64,
    pub weight_decay: f64,
    /// Standard deviation of the initial embedding weights, times 1/sqrt(d).
    pub init_scale: f64,
    /// Continue from the previous iteration's weights instead of retraining
    /// from a fresh initialization.
    pub warm_start: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: None,
            learning_rate: 0.02,
            epochs: 30,
            minibatch: 16,
            negatives_per_positive: 1,
            verification_weight: 1.0,
            weight_decay: 1e-2,
            init_scale: 0.3,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Query batch size as a fraction of the training pool.
    pub batch_fraction: f64,
    /// Stop once this fraction of the training pool is labeled.
    pub budget_fraction: f64,
    /// Uncertainty-ranked candidates handed to the diversity stage, as a
    /// multiple of the batch size.
    pub hard_pool_multiplier: f64,
    /// Candidate identities shown per recommendation round.
    pub idrm_batch_size: usize,
    /// Representative member samples shown per candidate identity.
    pub representatives: usize,
    pub annotator_error_rate: f64,
    /// Scales `annotator_error_rate` into a false-accept rate for wrong
    /// candidates. Zero models misses only.
    pub confusability_factor: f64,
    pub init_labeled_fraction: f64,
    /// Fraction of identities held out for evaluation (identity-disjoint).
    pub eval_fraction: f64,
    pub seed: u64,
    pub target_metric: Option<TargetMetric>,
    pub model: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            batch_fraction: 0.05,
            budget_fraction: 1.0,
            hard_pool_multiplier: 3.0,
            idrm_batch_size: 10,
            representatives: 3,
            annotator_error_rate: 0.0,
            confusability_factor: 0.0,
            init_labeled_fraction: 0.02,
            eval_fraction: 0.5,
            seed: 0,
            target_metric: None,
            model: ModelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let unit_open = |x: f64| x > 0.0 && x <= 1.0;
        if !unit_open(self.batch_fraction) {
            return bad(format!("batch_fraction {} not in (0, 1]", self.batch_fraction));
        }
        if !unit_open(self.budget_fraction) {
            return bad(format!("budget_fraction {} not in (0, 1]", self.budget_fraction));
        }
        if !(self.hard_pool_multiplier >= 1.0) {
            return bad(format!("hard_pool_multiplier {} < 1", self.hard_pool_multiplier));
        }
        if self.idrm_batch_size == 0 {
            return bad("idrm_batch_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.annotator_error_rate) {
            return bad(format!("annotator_error_rate {} not in [0, 1]", self.annotator_error_rate));
        }
        if !(self.confusability_factor >= 0.0) {
            return bad("confusability_factor must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.init_labeled_fraction) {
            return bad(format!("init_labeled_fraction {} not in [0, 1]", self.init_labeled_fraction));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad(format!("eval_fraction {} not in [0, 1)", self.eval_fraction));
        }
        let m = &self.model;
        if !(m.learning_rate > 0.0) || m.minibatch == 0 || m.embed_dim == Some(0) {
            return bad("model: learning_rate > 0, minibatch >= 1 and embed_dim >= 1 required".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
