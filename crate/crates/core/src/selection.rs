//! Query strategies.
//!
//! The hard-sample pipeline (`Strategy::Ahsm`) runs two stages:
//!
//! 1. every unlabeled sample gets an uncertainty score, `1 - v`, where `v` is
//!    the verification probability between the sample and the center of the
//!    class the identification head predicts for it. Scores above 0.5 mean the
//!    two heads disagree; those samples are *contradictory*. The top
//!    `hard_pool_multiplier * batch_size` samples form the hard list.
//! 2. the hard list is re-sorted by intra-diversity, the symmetric KL
//!    divergence between the sample's predicted distribution and that of its
//!    predicted class center, and the top `batch_size` survive.
//!
//! The baselines score each unlabeled sample's predicted distribution by
//! entropy (highest first), top-class probability (lowest first) or top-2
//! margin (lowest first). `Strategy::Random` draws uniformly.
//!
//! All orderings break ties by ascending sample id.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::pool::{IdentityId, PoolState};
use crate::prob::{clamped_ln, ProbDist, PROB_FLOOR};
use crate::rng::RngStream;
use crate::sample::{Dataset, Sample, SampleId, TruthSeal};

/// Uncertainty above which identification and verification disagree.
pub const CONTRADICTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Ahsm,
    Entropy,
    LeastConfidence,
    Margin,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Ahsm,
        Strategy::Entropy,
        Strategy::LeastConfidence,
        Strategy::Margin,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ahsm => "ahsm",
            Strategy::Entropy => "entropy",
            Strategy::LeastConfidence => "least_confidence",
            Strategy::Margin => "margin",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ahsm" => Ok(Strategy::Ahsm),
            "entropy" | "ep" => Ok(Strategy::Entropy),
            "least_confidence" | "lc" => Ok(Strategy::LeastConfidence),
            "margin" | "ms" => Ok(Strategy::Margin),
            "random" => Ok(Strategy::Random),
            other => Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Which end of a score ordering is selected first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Highest,
    Lowest,
}

impl Direction {
    fn cmp(self, a: f64, b: f64) -> Ordering {
        match self {
            Direction::Highest => b.total_cmp(&a),
            Direction::Lowest => a.total_cmp(&b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: SampleId,
    pub score: f64,
    pub rank: usize,
}

/// Sorts by score in `direction`, then by sample id, and assigns ranks.
pub fn rank_scores(mut scored: Vec<(SampleId, f64)>, direction: Direction) -> Vec<ScoredSample> {
    scored.sort_by(|(ia, a), (ib, b)| direction.cmp(*a, *b).then_with(|| ia.cmp(ib)));
    scored
        .into_iter()
        .enumerate()
        .map(|(rank, (sample_id, score))| ScoredSample {
            sample_id,
            score,
            rank,
        })
        .collect()
}

pub fn entropy_score(dist: &ProbDist) -> f64 {
    -dist
        .probs()
        .iter()
        .map(|&p| if p > 0.0 { p * clamped_ln(p) } else { 0.0 })
        .sum::<f64>()
}

pub fn least_confidence_score(dist: &ProbDist) -> f64 {
    dist.max()
}

pub fn margin_score(dist: &ProbDist) -> Result<f64> {
    if dist.len() < 2 {
        return Err(Error::MarginUndefined);
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in dist.probs() {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    Ok(first - second)
}

/// Symmetrized KL divergence `sum (p - q) ln(p / q)` with floored entries.
pub fn jeffreys_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    Ok(p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&a, &b)| {
            let (a, b) = (a.max(PROB_FLOOR), b.max(PROB_FLOOR));
            (a - b) * (a.ln() - b.ln())
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCenter {
    pub identity_id: IdentityId,
    pub center_features: Vec<f64>,
    pub center_dist: ProbDist,
}

impl ClassCenter {
    pub fn as_sample(&self) -> Sample {
        Sample::synthetic(format!("center:{}", self.identity_id), self.center_features.clone())
    }
}

/// Mean of the identity's labeled member features, with the model's
/// prediction for that mean.
pub fn class_center(
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    identity: &IdentityId,
) -> Result<ClassCenter> {
    let _seal = TruthSeal::enter();
    let members = pool.members(identity)?;
    let mut mean = vec![0.0; dataset.dim()];
    for m in members {
        for (acc, v) in mean.iter_mut().zip(&dataset.get(m)?.features) {
            *acc += v;
        }
    }
    let n = members.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    let center_dist = model.predict_identity(&Sample::synthetic("center", mean.clone()))?;
    Ok(ClassCenter {
        identity_id: identity.clone(),
        center_features: mean,
        center_dist,
    })
}

/// Centers for every class the model knows, in class-index order.
pub fn class_centers(model: &ModelState, pool: &PoolState, dataset: &Dataset) -> Result<Vec<ClassCenter>> {
    model
        .classes()
        .iter()
        .map(|c| class_center(model, pool, dataset, c))
        .collect()
}

fn center_for<'a>(model: &ModelState, centers: &'a [ClassCenter], dist: &ProbDist) -> Result<&'a ClassCenter> {
    if centers.is_empty() {
        return Err(Error::Empty("class centers"));
    }
    let predicted = &model.classes()[dist.argmax()];
    centers
        .iter()
        .find(|c| &c.identity_id == predicted)
        .ok_or_else(|| Error::UnknownIdentity(predicted.0.clone()))
}

/// `1 - verify(center of predicted class, x)`.
pub fn uncertainty_score(model: &ModelState, x: &Sample, centers: &[ClassCenter]) -> Result<f64> {
    let _seal = TruthSeal::enter();
    let dist = model.predict_identity(x)?;
    let center = center_for(model, centers, &dist)?;
    Ok(1.0 - model.verify_pair(&center.as_sample(), x)?)
}

/// Divergence between the sample's distribution and its predicted class
/// center's distribution.
pub fn intra_diversity_score(model: &ModelState, x: &Sample, centers: &[ClassCenter]) -> Result<f64> {
    let _seal = TruthSeal::enter();
    let dist = model.predict_identity(x)?;
    let center = center_for(model, centers, &dist)?;
    jeffreys_divergence(&dist, &center.center_dist)
}

/// Scores every sample in `ids` in parallel, preserving input order.
fn score_all<F>(dataset: &Dataset, ids: &[SampleId], score: F) -> Result<Vec<(SampleId, f64)>>
where
    F: Fn(&Sample) -> Result<f64> + Sync,
{
    ids.par_iter()
        .map(|id| {
            let _seal = TruthSeal::enter();
            Ok((id.clone(), score(dataset.get(id)?)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardCandidate {
    pub sample_id: SampleId,
    pub uncertainty: f64,
    pub contradictory: bool,
}

/// Uncertainty for every unlabeled sample: contradictory ones first, then by
/// descending uncertainty, then by sample id.
pub fn rank_by_uncertainty(
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    centers: &[ClassCenter],
) -> Result<Vec<HardCandidate>> {
    let ids: Vec<SampleId> = pool.unlabeled().iter().cloned().collect();
    let scored = score_all(dataset, &ids, |s| uncertainty_score(model, s, centers))?;
    let mut out: Vec<HardCandidate> = scored
        .into_iter()
        .map(|(sample_id, uncertainty)| HardCandidate {
            sample_id,
            uncertainty,
            contradictory: uncertainty > CONTRADICTION_THRESHOLD,
        })
        .collect();
    out.sort_by(|a, b| {
        b.contradictory
            .cmp(&a.contradictory)
            .then_with(|| b.uncertainty.total_cmp(&a.uncertainty))
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });
    Ok(out)
}

/// The first `hard_pool_size` entries of [`rank_by_uncertainty`].
pub fn select_hard_samples(
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    centers: &[ClassCenter],
    hard_pool_size: usize,
) -> Result<Vec<HardCandidate>> {
    let mut ranked = rank_by_uncertainty(model, pool, dataset, centers)?;
    ranked.truncate(hard_pool_size);
    Ok(ranked)
}

/// Keeps the `batch_size` hard samples with the highest intra-diversity.
///
/// With a single class every divergence is zero, so the hard list's own
/// (uncertainty) order is kept instead.
pub fn reduce_redundancy(
    model: &ModelState,
    dataset: &Dataset,
    hard_list: &[SampleId],
    centers: &[ClassCenter],
    batch_size: usize,
) -> Result<Vec<ScoredSample>> {
    let scored = score_all(dataset, hard_list, |s| intra_diversity_score(model, s, centers))?;
    let mut ranked = if model.class_count() < 2 {
        scored
            .into_iter()
            .enumerate()
            .map(|(rank, (sample_id, score))| ScoredSample { sample_id, score, rank })
            .collect()
    } else {
        rank_scores(scored, Direction::Highest)
    };
    ranked.truncate(batch_size);
    Ok(ranked)
}

/// Per-candidate record written alongside each selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub sample_id: SampleId,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uncertainty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intra_diversity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contradictory: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub strategy: Strategy,
    pub query: Vec<SampleId>,
    pub audit: Vec<AuditEntry>,
}

/// `min(round(batch_fraction * n), |unlabeled|)`.
pub fn default_batch_size(config: &ExperimentConfig, pool: &PoolState) -> usize {
    let wanted = (config.batch_fraction * pool.total() as f64).round() as usize;
    wanted.min(pool.unlabeled().len())
}

/// Selects a query batch of the default size.
pub fn select_batch(
    strategy: Strategy,
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    config: &ExperimentConfig,
    rng: &RngStream,
) -> Result<Selection> {
    let size = default_batch_size(config, pool);
    select_batch_sized(strategy, model, pool, dataset, config, rng, size)
}

/// Selects up to `batch_size` unlabeled samples.
pub fn select_batch_sized(
    strategy: Strategy,
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    config: &ExperimentConfig,
    rng: &RngStream,
    batch_size: usize,
) -> Result<Selection> {
    let batch_size = batch_size.min(pool.unlabeled().len());
    let empty = |strategy| Selection {
        strategy,
        query: Vec::new(),
        audit: Vec::new(),
    };
    if batch_size == 0 {
        return Ok(empty(strategy));
    }
    let ids: Vec<SampleId> = pool.unlabeled().iter().cloned().collect();
    let (query, audit) = match strategy {
        Strategy::Ahsm => {
            let centers = class_centers(model, pool, dataset)?;
            let hard_size = (config.hard_pool_multiplier * batch_size as f64).round() as usize;
            let ranked = rank_by_uncertainty(model, pool, dataset, &centers)?;
            let hard: Vec<SampleId> = ranked
                .iter()
                .take(hard_size)
                .map(|h| h.sample_id.clone())
                .collect();
            let kept = reduce_redundancy(model, dataset, &hard, &centers, batch_size)?;
            let diversity = score_all(dataset, &hard, |s| intra_diversity_score(model, s, &centers))?;
            let query: Vec<SampleId> = kept.into_iter().map(|s| s.sample_id).collect();
            let audit = ranked
                .into_iter()
                .map(|h| AuditEntry {
                    intra_diversity: diversity
                        .iter()
                        .find(|(id, _)| *id == h.sample_id)
                        .map(|(_, d)| *d),
                    uncertainty: Some(h.uncertainty),
                    contradictory: Some(h.contradictory),
                    score: None,
                    selected: query.contains(&h.sample_id),
                    sample_id: h.sample_id,
                })
                .collect();
            (query, audit)
        }
        Strategy::Random => {
            let mut r = rng.substream("select-random");
            let picked = index::sample(&mut r, ids.len(), batch_size);
            let query: Vec<SampleId> = picked.into_iter().map(|i| ids[i].clone()).collect();
            let audit = ids
                .iter()
                .map(|id| AuditEntry {
                    sample_id: id.clone(),
                    uncertainty: None,
                    intra_diversity: None,
                    contradictory: None,
                    score: None,
                    selected: query.contains(id),
                })
                .collect();
            (query, audit)
        }
        heuristic => {
            let (direction, score): (Direction, fn(&ProbDist) -> Result<f64>) = match heuristic {
                Strategy::Entropy => (Direction::Highest, |d| Ok(entropy_score(d))),
                Strategy::LeastConfidence => (Direction::Lowest, |d| Ok(least_confidence_score(d))),
                Strategy::Margin => (Direction::Lowest, margin_score),
                _ => unreachable!(),
            };
            let scored = score_all(dataset, &ids, |s| score(&model.predict_identity(s)?))?;
            let ranked = rank_scores(scored, direction);
            let query: Vec<SampleId> = ranked
                .iter()
                .take(batch_size)
                .map(|s| s.sample_id.clone())
                .collect();
            let audit = ranked
                .into_iter()
                .map(|s| AuditEntry {
                    selected: s.rank < batch_size,
                    sample_id: s.sample_id,
                    uncertainty: None,
                    intra_diversity: None,
                    contradictory: None,
                    score: Some(s.score),
                })
                .collect();
            (query, audit)
        }
    };
    Ok(Selection {
        strategy,
        query,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::LabelSource;
    use crate::sample::Truth;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use proptest::strategy::Strategy as _;

    fn dist(p: &[f64]) -> ProbDist {
        ProbDist::new(p.to_vec()).unwrap()
    }

    /// 2-d features, identity embedding, class 0 favoured along x and class 1
    /// along y; verification says "same" near the center.
    fn model(verif_bias: f64) -> ModelState {
        model_with(-1.0, verif_bias)
    }

    fn model_with(verif_weight: f64, verif_bias: f64) -> ModelState {
        ModelState::from_weights(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            vec![verif_weight; 2],
            verif_bias,
            vec![IdentityId("id00000".into()), IdentityId("id00001".into())],
        )
        .unwrap()
    }

    fn sample(id: &str, x: f64, y: f64) -> Sample {
        Sample::new(id, vec![x, y], None, Truth::new("t"))
    }

    /// Labeled: two members per class around (3,0) and (0,3). Unlabeled: the rest.
    fn fixture(unlabeled: Vec<Sample>) -> (Dataset, PoolState) {
        let mut all = vec![
            sample("l0", 3.0, 0.0),
            sample("l1", 3.0, 0.2),
            sample("l2", 0.0, 3.0),
            sample("l3", 0.2, 3.0),
        ];
        all.extend(unlabeled);
        let ds = Dataset::new(all).unwrap();
        let labels: Vec<(SampleId, &str)> = vec![
            ("l0".into(), "a"),
            ("l1".into(), "a"),
            ("l2".into(), "b"),
            ("l3".into(), "b"),
        ];
        let pool = PoolState::with_labels(&ds, &labels, LabelSource::Human).unwrap();
        (ds, pool)
    }

    #[test]
    fn scorer_examples() {
        assert_eq!(entropy_score(&dist(&[0.0, 1.0, 0.0])), 0.0);
        assert!((entropy_score(&ProbDist::uniform(7)) - 7f64.ln()).abs() < 1e-12);
        let oracle = -(0.5 * 0.5f64.ln() + 0.3 * 0.3f64.ln() + 0.2 * 0.2f64.ln());
        assert!((entropy_score(&dist(&[0.5, 0.3, 0.2])) - oracle).abs() < 1e-12);
        assert!((entropy_score(&dist(&[0.5, 0.3, 0.2])) - 1.0297).abs() < 1e-4);
        assert_eq!(least_confidence_score(&dist(&[0.9, 0.1])), 0.9);
        assert!((least_confidence_score(&ProbDist::uniform(5)) - 0.2).abs() < 1e-15);
        assert_eq!(margin_score(&dist(&[0.5, 0.5])).unwrap(), 0.0);
        assert!((margin_score(&dist(&[0.7, 0.2, 0.1])).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(margin_score(&dist(&[1.0])), Err(Error::MarginUndefined)));
        assert!(jeffreys_divergence(&dist(&[1.0]), &dist(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn uncertainty_examples() {
        let (ds, pool) = fixture(vec![sample("u0", 3.0, 0.1)]);
        // w = 0 makes the verification output logistic(b).
        let m = model_with(0.0, (1.0f64 / 3.0).ln());
        let centers = class_centers(&m, &pool, &ds).unwrap();
        let u = uncertainty_score(&m, ds.get(&"u0".into()).unwrap(), &centers).unwrap();
        assert!((u - 0.75).abs() < 1e-12);
        assert!(uncertainty_score(&m, ds.get(&"u0".into()).unwrap(), &[]).is_err());

        let confident = model_with(0.0, 800.0);
        let u = uncertainty_score(&confident, ds.get(&"u0".into()).unwrap(), &centers).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn class_center_is_member_mean() {
        let (ds, pool) = fixture(vec![]);
        let c = class_center(&model(2.0), &pool, &ds, &IdentityId("id00000".into())).unwrap();
        assert_eq!(c.center_features, vec![3.0, 0.1]);
        assert_eq!(c.center_dist, model(2.0).predict_identity(&c.as_sample()).unwrap());
    }

    #[test]
    fn misclassified_sample_leads_the_hard_list() {
        // "odd" lies along class 1's direction but far beyond its center.
        let (ds, pool) = fixture(vec![
            sample("a", 2.9, 0.0),
            sample("b", 0.1, 2.8),
            sample("c", 2.5, 0.5),
            sample("odd", -3.0, 6.0),
        ]);
        let m = model(2.0);
        let centers = class_centers(&m, &pool, &ds).unwrap();
        let ranked = rank_by_uncertainty(&m, &pool, &ds, &centers).unwrap();
        assert_eq!(ranked[0].sample_id.0, "odd");
        assert!(ranked[0].contradictory);
        assert!(ranked[1..].iter().all(|h| !h.contradictory));
        let hard = select_hard_samples(&m, &pool, &ds, &centers, 2).unwrap();
        assert_eq!(hard, ranked[..2]);
    }

    #[test]
    fn no_contradictions_when_everything_verifies() {
        let (ds, pool) = fixture(vec![sample("a", 2.9, 0.0), sample("b", 0.1, 2.8)]);
        let m = model(50.0);
        let centers = class_centers(&m, &pool, &ds).unwrap();
        let ranked = rank_by_uncertainty(&m, &pool, &ds, &centers).unwrap();
        assert!(ranked.iter().all(|h| !h.contradictory));
        let (ds, pool) = fixture(vec![]);
        assert!(select_hard_samples(&m, &pool, &ds, &centers, 5).unwrap().is_empty());
    }

    #[test]
    fn redundancy_keeps_everything_when_small_and_breaks_ties_by_id() {
        let (ds, pool) = fixture(vec![
            sample("x1", 1.0, 1.5),
            sample("x0", 1.0, 1.5),
            sample("y", 2.0, 0.3),
        ]);
        let m = model(2.0);
        let centers = class_centers(&m, &pool, &ds).unwrap();
        let hard: Vec<SampleId> = vec!["y".into(), "x1".into(), "x0".into()];
        let all = reduce_redundancy(&m, &ds, &hard, &centers, 10).unwrap();
        assert_eq!(all.len(), 3);
        let pos = |id: &str| all.iter().position(|s| s.sample_id.0 == id).unwrap();
        assert_eq!(all[pos("x0")].score, all[pos("x1")].score);
        assert_eq!(pos("x0") + 1, pos("x1"));
        let top = reduce_redundancy(&m, &ds, &hard, &centers, 1).unwrap();
        let best = hard
            .iter()
            .map(|id| (intra_diversity_score(&m, ds.get(id).unwrap(), &centers).unwrap(), id))
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
            .unwrap();
        assert_eq!(&top[0].sample_id, best.1);
        let _ = pool;
    }

    #[test]
    fn batch_selection_contracts() {
        let (ds, pool) = fixture((0..12).map(|i| sample(&format!("u{i:02}"), i as f64 * 0.3, 3.0 - i as f64 * 0.25)).collect());
        let m = model(2.0);
        let config = ExperimentConfig::default();
        let rng = RngStream::new(4);
        for s in Strategy::ALL {
            let sel = select_batch_sized(s, &m, &pool, &ds, &config, &rng, 0).unwrap();
            assert!(sel.query.is_empty());
            let sel = select_batch_sized(s, &m, &pool, &ds, &config, &rng, 4).unwrap();
            assert_eq!(sel.query.len(), 4);
            let unique: std::collections::BTreeSet<_> = sel.query.iter().collect();
            assert_eq!(unique.len(), 4);
            assert!(sel.query.iter().all(|q| pool.unlabeled().contains(q)));
            let again = select_batch_sized(s, &m, &pool, &ds, &config, &rng, 4).unwrap();
            assert_eq!(sel, again);
        }
        let other = select_batch_sized(Strategy::Random, &m, &pool, &ds, &config, &RngStream::new(5), 4).unwrap();
        let sel = select_batch_sized(Strategy::Random, &m, &pool, &ds, &config, &rng, 4).unwrap();
        assert_ne!(sel.query, other.query);
    }

    #[test]
    fn margin_strategy_needs_two_classes() {
        let ds = Dataset::new(vec![sample("l", 1.0, 0.0), sample("u", 0.0, 1.0)]).unwrap();
        let pool = PoolState::with_labels(&ds, &[("l".into(), "a")], LabelSource::Human).unwrap();
        let m = ModelState::from_weights(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0], vec![0.0], vec![0.0; 2], 0.0, vec![IdentityId("id00000".into())]).unwrap();
        let r = select_batch_sized(Strategy::Margin, &m, &pool, &ds, &ExperimentConfig::default(), &RngStream::new(0), 1);
        assert!(matches!(r, Err(Error::MarginUndefined)));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("ep".parse::<Strategy>().unwrap(), Strategy::Entropy);
        assert!("bogus".parse::<Strategy>().is_err());
    }

    fn arb_dist(k: usize) -> impl proptest::strategy::Strategy<Value = ProbDist> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| ProbDist::new(v.iter().map(|x| x / s).collect()).ok()).flatten()
        })
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(d in (1usize..12).prop_flat_map(arb_dist)) {
            let h = entropy_score(&d);
            prop_assert!(h >= -1e-12 && h <= (d.len() as f64).ln() + 1e-9);
        }

        #[test]
        fn confidence_and_margin_agree_with_sort(d in (2usize..12).prop_flat_map(arb_dist)) {
            let mut sorted = d.probs().to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            prop_assert_eq!(margin_score(&d).unwrap(), sorted[0] - sorted[1]);
            prop_assert!(least_confidence_score(&d) >= 1.0 / d.len() as f64 - 1e-12);
        }

        #[test]
        fn jeffreys_axioms((p, q) in (1usize..12).prop_flat_map(|k| (arb_dist(k), arb_dist(k)))) {
            let pq = jeffreys_divergence(&p, &q).unwrap();
            prop_assert!(pq >= 0.0);
            prop_assert!((pq - jeffreys_divergence(&q, &p).unwrap()).abs() <= 1e-12);
            prop_assert!(jeffreys_divergence(&p, &p).unwrap() < 1e-8);
        }

        #[test]
        fn ranking_is_a_sorted_permutation(scores in prop::collection::vec(0u8..5, 0..30), highest: bool) {
            let dir = if highest { Direction::Highest } else { Direction::Lowest };
            let input: Vec<(SampleId, f64)> = scores.iter().enumerate().map(|(i, s)| (SampleId(format!("s{i:02}")), *s as f64)).collect();
            let ranked = rank_scores(input.clone(), dir);
            prop_assert_eq!(ranked.len(), input.len());
            for (i, w) in ranked.windows(2).enumerate() {
                prop_assert_eq!(w[0].rank, i);
                let ord = dir.cmp(w[0].score, w[1].score);
                prop_assert!(ord.is_lt() || (ord.is_eq() && w[0].sample_id < w[1].sample_id));
            }
        }
    }
}
