//! Reference identification/verification model.
//!
//! A shared linear embedding feeds two heads: a softmax identification head
//! over the registered identities, and a logistic verification head applied to
//! the elementwise square of the difference between two embeddings. The
//! selection heuristics only consume the probabilities these heads emit.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::pool::{IdentityId, PoolState};
use crate::prob::{clamped_ln, ProbDist};
use crate::rng::RngStream;
use crate::sample::{Dataset, Sample, TruthSeal};

/// Raw identification-head outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Logits(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub same: bool,
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &Logits) -> Result<ProbDist> {
    let a = &logits.0;
    if a.is_empty() {
        return Err(Error::Empty("logits"));
    }
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = a.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbDist::new(exps.into_iter().map(|e| e / sum).collect())
}

/// Cross-entropy against a one-hot target: `-ln(pred[target])`, floored.
pub fn identification_loss(pred: &ProbDist, target_class: usize) -> Result<f64> {
    let p = pred.probs().get(target_class).ok_or(Error::ClassOutOfRange {
        index: target_class,
        classes: pred.len(),
    })?;
    Ok(-clamped_ln(*p))
}

/// Binary cross-entropy with `prob_same` as the "same identity" probability.
pub fn verification_loss(prob_same: f64, label: PairLabel) -> Result<f64> {
    if !(0.0..=1.0).contains(&prob_same) {
        return Err(Error::InvalidDistribution(format!(
            "prob_same {prob_same} not in [0, 1]"
        )));
    }
    let p = if label.same { prob_same } else { 1.0 - prob_same };
    Ok(-clamped_ln(p))
}

/// Gradient of the softmax cross-entropy with respect to the logits, `y - p`.
///
/// Its magnitude is what makes misclassified samples informative: for a
/// correctly classified sample with top probability above 1/2 the L1 norm is
/// below 1, and for a misclassified one it is at least 1.
pub fn softmax_ce_gradient(logits: &Logits, target_class: usize) -> Result<Vec<f64>> {
    let y = softmax(logits)?;
    if target_class >= y.len() {
        return Err(Error::ClassOutOfRange {
            index: target_class,
            classes: y.len(),
        });
    }
    let mut g = y.probs().to_vec();
    g[target_class] -= 1.0;
    Ok(g)
}

fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Weights of the reference model.
///
/// Matrices are row-major: `embed` is `embed_dim x input_dim` (embedding =
/// `embed * x`, no bias), `id_weights` is `classes x embed_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    input_dim: usize,
    embed_dim: usize,
    embed: Vec<f64>,
    id_weights: Vec<f64>,
    id_bias: Vec<f64>,
    verif_weights: Vec<f64>,
    verif_bias: f64,
    classes: Vec<IdentityId>,
}

impl ModelState {
    /// Builds a model from explicit weights.
    #[allow(clippy::too_many_arguments)]
    pub fn from_weights(
        input_dim: usize,
        embed_dim: usize,
        embed: Vec<f64>,
        id_weights: Vec<f64>,
        id_bias: Vec<f64>,
        verif_weights: Vec<f64>,
        verif_bias: f64,
        classes: Vec<IdentityId>,
    ) -> Result<Self> {
        let k = classes.len();
        let check = |got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::LengthMismatch(got, want))
            }
        };
        check(embed.len(), input_dim * embed_dim)?;
        check(id_weights.len(), k * embed_dim)?;
        check(id_bias.len(), k)?;
        check(verif_weights.len(), embed_dim)?;
        let model = ModelState {
            input_dim,
            embed_dim,
            embed,
            id_weights,
            id_bias,
            verif_weights,
            verif_bias,
            classes,
        };
        if !model.all_weights().all(f64::is_finite) || !verif_bias.is_finite() {
            return Err(Error::InvalidConfig("non-finite model weight".into()));
        }
        Ok(model)
    }

    /// Fresh random initialization.
    pub fn init<R: Rng>(
        input_dim: usize,
        embed_dim: usize,
        classes: Vec<IdentityId>,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        let k = classes.len();
        let embed_sd = init_scale / (input_dim as f64).sqrt();
        let embed = sample_normal(rng, embed_sd, input_dim * embed_dim);
        let id_weights = sample_normal(rng, 0.01, k * embed_dim);
        ModelState {
            input_dim,
            embed_dim,
            embed,
            id_weights,
            id_bias: vec![0.0; k],
            verif_weights: vec![0.0; embed_dim],
            verif_bias: 0.0,
            classes,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[IdentityId] {
        &self.classes
    }

    pub fn class_of(&self, identity: &IdentityId) -> Option<usize> {
        self.classes.iter().position(|c| c == identity)
    }

    pub fn embed_weights(&self) -> &[f64] {
        &self.embed
    }

    pub fn id_weights(&self) -> &[f64] {
        &self.id_weights
    }

    pub fn id_bias(&self) -> &[f64] {
        &self.id_bias
    }

    pub fn verif_weights(&self) -> &[f64] {
        &self.verif_weights
    }

    pub fn verif_bias(&self) -> f64 {
        self.verif_bias
    }

    fn all_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.embed
            .iter()
            .chain(&self.id_weights)
            .chain(&self.id_bias)
            .chain(&self.verif_weights)
            .copied()
    }

    /// SHA-256 over every weight's bit pattern and the class index.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.input_dim as u64).to_le_bytes());
        h.update((self.embed_dim as u64).to_le_bytes());
        for w in self.all_weights().chain(std::iter::once(self.verif_bias)) {
            h.update(w.to_bits().to_le_bytes());
        }
        for c in &self.classes {
            h.update(c.0.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: features.len(),
            });
        }
        Ok(())
    }

    pub fn embed_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(features)?;
        Ok(self.embed_unchecked(features))
    }

    fn embed_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.embed
            .chunks_exact(self.input_dim)
            .map(|row| dot(row, x))
            .collect()
    }

    pub fn embed(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.embed_features(&sample.features)
    }

    fn logits_from_embedding(&self, e: &[f64]) -> Logits {
        Logits(
            self.id_weights
                .chunks_exact(self.embed_dim)
                .zip(&self.id_bias)
                .map(|(row, b)| dot(row, e) + b)
                .collect(),
        )
    }

    pub fn logits(&self, sample: &Sample) -> Result<Logits> {
        Ok(self.logits_from_embedding(&self.embed(sample)?))
    }

    /// Identification-branch distribution; its argmax is the predicted identity.
    pub fn predict_identity(&self, sample: &Sample) -> Result<ProbDist> {
        if self.classes.is_empty() {
            return Err(Error::InsufficientIdentities(0));
        }
        softmax(&self.logits(sample)?)
    }

    fn verify_embeddings(&self, ea: &[f64], eb: &[f64]) -> f64 {
        let s: f64 = self
            .verif_weights
            .iter()
            .zip(ea.iter().zip(eb))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum();
        logistic(s + self.verif_bias)
    }

    /// Probability that `a` and `b` share an identity. Symmetric in its
    /// arguments.
    pub fn verify_pair(&self, a: &Sample, b: &Sample) -> Result<f64> {
        Ok(self.verify_embeddings(&self.embed(a)?, &self.embed(b)?))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sample_normal<R: Rng>(rng: &mut R, sd: f64, n: usize) -> Vec<f64> {
    if sd == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, sd).expect("finite sd");
    (0..n).map(|_| normal.sample(rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    /// Mean per-sample objective over the final epoch (0 when no epochs ran).
    pub final_loss: f64,
    pub epochs: usize,
    /// Set when no identity had two labeled members, so no positive pair
    /// existed and the verification term was dropped.
    pub verification_skipped: bool,
}

struct Gradients {
    embed: Vec<f64>,
    id_weights: Vec<f64>,
    id_bias: Vec<f64>,
    verif_weights: Vec<f64>,
    verif_bias: f64,
}

impl Gradients {
    fn zeros(m: &ModelState) -> Self {
        Gradients {
            embed: vec![0.0; m.embed.len()],
            id_weights: vec![0.0; m.id_weights.len()],
            id_bias: vec![0.0; m.id_bias.len()],
            verif_weights: vec![0.0; m.verif_weights.len()],
            verif_bias: 0.0,
        }
    }
}

/// Trains the model on the labeled pool by minibatch SGD.
///
/// The objective per labeled sample is its identification loss plus
/// `verification_weight` times the verification loss of one positive partner
/// (same identity, when one exists) and `negatives_per_positive` negative
/// partners drawn uniformly from other identities. Training starts from a
/// fresh initialization unless `warm` is given and `warm_start` is set.
pub fn train(
    pool: &PoolState,
    dataset: &Dataset,
    config: &ModelConfig,
    rng: &RngStream,
    warm: Option<&ModelState>,
) -> Result<(ModelState, TrainSummary)> {
    let _seal = TruthSeal::enter();
    let classes: Vec<IdentityId> = pool.identities().keys().cloned().collect();
    if classes.len() < 2 {
        return Err(Error::InsufficientIdentities(classes.len()));
    }
    let class_pos: BTreeMap<&IdentityId, usize> =
        classes.iter().enumerate().map(|(i, c)| (c, i)).collect();

    let mut features: Vec<&[f64]> = Vec::with_capacity(pool.labeled_count());
    let mut targets: Vec<usize> = Vec::with_capacity(pool.labeled_count());
    for (sample_id, label) in pool.labeled() {
        features.push(&dataset.get(sample_id)?.features);
        targets.push(class_pos[&label.identity_id]);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, &t) in targets.iter().enumerate() {
        members[t].push(i);
    }
    let verification_skipped = members.iter().all(|m| m.len() < 2);

    let input_dim = dataset.dim();
    let embed_dim = config.embed_dim.unwrap_or(input_dim);
    let mut init_rng = rng.substream("model-init");
    let mut model = match warm.filter(|_| config.warm_start) {
        Some(prev) if prev.input_dim == input_dim && prev.embed_dim == embed_dim => {
            warm_from(prev, classes, &mut init_rng)
        }
        _ => ModelState::init(input_dim, embed_dim, classes, config.init_scale, &mut init_rng),
    };

    let mut sgd_rng = rng.substream("model-sgd");
    let n = features.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut final_loss = 0.0;
    for _ in 0..config.epochs {
        order.shuffle(&mut sgd_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.minibatch) {
            let mut grads = Gradients::zeros(&model);
            for &i in batch {
                epoch_loss += accumulate_identification(&model, features[i], targets[i], &mut grads)?;
                if verification_skipped || config.verification_weight == 0.0 {
                    continue;
                }
                let class = &members[targets[i]];
                if class.len() >= 2 {
                    let mut j = class[sgd_rng.random_range(0..class.len() - 1)];
                    if j == i {
                        j = class[class.len() - 1];
                    }
                    epoch_loss += config.verification_weight
                        * accumulate_verification(&model, features[i], features[j], true, config.verification_weight, &mut grads);
                }
                for _ in 0..config.negatives_per_positive {
                    let j = loop {
                        let j = sgd_rng.random_range(0..n);
                        if targets[j] != targets[i] {
                            break j;
                        }
                    };
                    epoch_loss += config.verification_weight
                        * accumulate_verification(&model, features[i], features[j], false, config.verification_weight, &mut grads);
                }
            }
            apply(&mut model, &grads, config, batch.len());
        }
        final_loss = epoch_loss / n as f64;
        if !final_loss.is_finite() {
            return Err(diverged());
        }
    }
    if !model.all_weights().all(f64::is_finite) || !model.verif_bias.is_finite() {
        return Err(diverged());
    }
    Ok((
        model,
        TrainSummary {
            final_loss,
            epochs: config.epochs,
            verification_skipped,
        },
    ))
}

fn warm_from<R: Rng>(prev: &ModelState, classes: Vec<IdentityId>, rng: &mut R) -> ModelState {
    let m = prev.embed_dim;
    let mut id_weights = Vec::with_capacity(classes.len() * m);
    let mut id_bias = Vec::with_capacity(classes.len());
    for c in &classes {
        match prev.class_of(c) {
            Some(k) => {
                id_weights.extend_from_slice(&prev.id_weights[k * m..(k + 1) * m]);
                id_bias.push(prev.id_bias[k]);
            }
            None => {
                id_weights.extend(sample_normal(rng, 0.01, m));
                id_bias.push(0.0);
            }
        }
    }
    ModelState {
        id_weights,
        id_bias,
        classes,
        ..prev.clone()
    }
}

fn diverged() -> Error {
    Error::InvalidConfig("training diverged; lower the learning rate".into())
}

fn accumulate_identification(model: &ModelState, x: &[f64], target: usize, g: &mut Gradients) -> Result<f64> {
    let m = model.embed_dim;
    let e = model.embed_unchecked(x);
    let logits = model.logits_from_embedding(&e);
    let y = softmax(&logits).map_err(|_| diverged())?;
    let loss = identification_loss(&y, target).expect("target in range");
    let mut r = y.probs().to_vec();
    r[target] -= 1.0;
    let mut de = vec![0.0; m];
    for (k, &rk) in r.iter().enumerate() {
        let row = &model.id_weights[k * m..(k + 1) * m];
        let grow = &mut g.id_weights[k * m..(k + 1) * m];
        for j in 0..m {
            grow[j] += rk * e[j];
            de[j] += rk * row[j];
        }
        g.id_bias[k] += rk;
    }
    add_outer(&mut g.embed, &de, x);
    Ok(loss)
}

fn accumulate_verification(
    model: &ModelState,
    xa: &[f64],
    xb: &[f64],
    same: bool,
    weight: f64,
    g: &mut Gradients,
) -> f64 {
    let u: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| a - b).collect();
    let delta = model.embed_unchecked(&u);
    let s: f64 = model
        .verif_weights
        .iter()
        .zip(&delta)
        .map(|(w, d)| w * d * d)
        .sum::<f64>()
        + model.verif_bias;
    let p = logistic(s);
    let loss = verification_loss(p, PairLabel { same }).unwrap_or(f64::NAN);
    let gs = weight * (p - if same { 1.0 } else { 0.0 });
    let mut dd = vec![0.0; delta.len()];
    for j in 0..delta.len() {
        g.verif_weights[j] += gs * delta[j] * delta[j];
        dd[j] = gs * 2.0 * model.verif_weights[j] * delta[j];
    }
    g.verif_bias += gs;
    add_outer(&mut g.embed, &dd, &u);
    loss
}

fn add_outer(target: &mut [f64], left: &[f64], right: &[f64]) {
    let cols = right.len();
    for (row, &l) in target.chunks_exact_mut(cols).zip(left) {
        if l == 0.0 {
            continue;
        }
        for (t, &r) in row.iter_mut().zip(right) {
            *t += l * r;
        }
    }
}

fn apply(model: &mut ModelState, g: &Gradients, config: &ModelConfig, batch: usize) {
    let step = config.learning_rate / batch as f64;
    let decay = 1.0 - config.learning_rate * config.weight_decay;
    let update = |w: &mut [f64], gw: &[f64], decayed: bool| {
        for (w, gw) in w.iter_mut().zip(gw) {
            if decayed {
                *w *= decay;
            }
            *w -= step * gw;
        }
    };
    update(&mut model.embed, &g.embed, true);
    update(&mut model.id_weights, &g.id_weights, true);
    update(&mut model.id_bias, &g.id_bias, false);
    update(&mut model.verif_weights, &g.verif_weights, true);
    model.verif_bias -= step * g.verif_bias;
}
