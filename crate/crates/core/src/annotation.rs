//! Identity recommendation and annotation cost accounting.
//!
//! For each queried sample the registered identities are ranked by the
//! model's predicted probability and shown to the annotator in rounds of
//! `idrm_batch_size`. The annotator either matches one candidate, rejects the
//! round, or (once every round is exhausted) opens a new identity. Every
//! candidate inspected costs one comparison; the naive baseline is one
//! comparison per registered identity.

use std::cmp::Ordering;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::pool::{IdentityId, LabelSource, PoolState};
use crate::rng::{chance, RngStream};
use crate::sample::{Dataset, Sample, SampleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub identity_id: IdentityId,
    /// Predicted probability of the identity; 0 for identities created after
    /// the model was trained.
    pub probability: f64,
    pub representatives: Vec<SampleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub sample_id: SampleId,
    /// 1-based.
    pub round: usize,
    pub candidates: Vec<Candidate>,
}

impl Recommendation {
    /// No candidates left: the only remaining action is a new identity.
    pub fn is_exhausted(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Every registered identity in recommendation order for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRanking {
    pub sample_id: SampleId,
    pub entries: Vec<(IdentityId, f64)>,
}

impl IdentityRanking {
    pub fn rounds(&self, per_round: usize) -> usize {
        self.entries.len().div_ceil(per_round)
    }

    pub fn round_slice(&self, round: usize, per_round: usize) -> &[(IdentityId, f64)] {
        let start = round.saturating_sub(1).saturating_mul(per_round).min(self.entries.len());
        let end = (start + per_round).min(self.entries.len());
        &self.entries[start..end]
    }

    /// Candidates shown before and including `round`.
    pub fn shown_through(&self, round: usize, per_round: usize) -> usize {
        round.saturating_mul(per_round).min(self.entries.len())
    }
}

/// Ranks all registered identities for `sample_id`.
///
/// Identities the model knows are ordered by descending predicted
/// probability. Identities registered after training follow with probability
/// zero, ordered by their best verification score against the sample. Ties
/// go to the smaller identity id.
pub fn rank_identities(
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    sample_id: &SampleId,
) -> Result<IdentityRanking> {
    let sample = dataset.get(sample_id)?;
    let dist = model.predict_identity(sample)?;
    let mut known: Vec<(IdentityId, f64)> = Vec::new();
    let mut unknown: Vec<(IdentityId, f64)> = Vec::new();
    for identity in pool.identities().keys() {
        match model.class_of(identity) {
            Some(k) => known.push((identity.clone(), dist.probs()[k])),
            None => {
                let best = pool
                    .members(identity)?
                    .iter()
                    .map(|m| model.verify_pair(dataset.get(m)?, sample))
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                unknown.push((identity.clone(), best));
            }
        }
    }
    let by_score = |a: &(IdentityId, f64), b: &(IdentityId, f64)| -> Ordering {
        b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
    };
    known.sort_by(by_score);
    unknown.sort_by(by_score);
    known.extend(unknown.into_iter().map(|(id, _)| (id, 0.0)));
    Ok(IdentityRanking {
        sample_id: sample_id.clone(),
        entries: known,
    })
}

/// Up to `count` members of `identity` most similar to `sample` under the
/// verification head.
pub fn representatives(
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    identity: &IdentityId,
    sample: &Sample,
    count: usize,
) -> Result<Vec<SampleId>> {
    let mut scored: Vec<(&SampleId, f64)> = pool
        .members(identity)?
        .iter()
        .map(|m| Ok((m, model.verify_pair(dataset.get(m)?, sample)?)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(scored.into_iter().take(count).map(|(id, _)| id.clone()).collect())
}

/// Builds the `round`-th recommendation from a precomputed ranking.
pub fn recommendation_from_ranking(
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    ranking: &IdentityRanking,
    round: usize,
    config: &ExperimentConfig,
) -> Result<Recommendation> {
    let sample = dataset.get(&ranking.sample_id)?;
    let candidates = ranking
        .round_slice(round, config.idrm_batch_size)
        .iter()
        .map(|(identity, probability)| {
            Ok(Candidate {
                identity_id: identity.clone(),
                probability: *probability,
                representatives: representatives(model, pool, dataset, identity, sample, config.representatives)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Recommendation {
        sample_id: ranking.sample_id.clone(),
        round,
        candidates,
    })
}

/// The `round`-th slice of candidate identities for a queried sample.
pub fn recommend_candidates(
    model: &ModelState,
    pool: &PoolState,
    dataset: &Dataset,
    sample_id: &SampleId,
    round: usize,
    config: &ExperimentConfig,
) -> Result<Recommendation> {
    if !dataset.contains(sample_id) {
        return Err(Error::UnknownSample(sample_id.0.clone()));
    }
    if !pool.query().contains(sample_id) {
        return Err(Error::NotQueried(sample_id.0.clone()));
    }
    if round == 0 {
        return Err(Error::InvalidConfig("rounds are 1-based".into()));
    }
    let ranking = rank_identities(model, pool, dataset, sample_id)?;
    recommendation_from_ranking(model, pool, dataset, &ranking, round, config)
}

/// An annotator's answer to one recommendation round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Decision {
    /// Matched the candidate at 1-based `position` in the round.
    Matched { identity_id: IdentityId, position: usize },
    RejectedRound,
    NewIdentity,
}

/// Labeling cost counters. All counters only grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub comparisons: u64,
    pub labels_assigned: u64,
    pub new_identities_created: u64,
    /// Only measured by simulated annotators.
    pub wrong_labels: u64,
    pub naive_comparisons_baseline: u64,
}

impl CostLedger {
    pub fn add(&mut self, other: &CostLedger) {
        self.comparisons += other.comparisons;
        self.labels_assigned += other.labels_assigned;
        self.new_identities_created += other.new_identities_created;
        self.wrong_labels += other.wrong_labels;
        self.naive_comparisons_baseline += other.naive_comparisons_baseline;
    }

    /// Counter increments since `earlier`.
    pub fn since(&self, earlier: &CostLedger) -> CostLedger {
        CostLedger {
            comparisons: self.comparisons - earlier.comparisons,
            labels_assigned: self.labels_assigned - earlier.labels_assigned,
            new_identities_created: self.new_identities_created - earlier.new_identities_created,
            wrong_labels: self.wrong_labels - earlier.wrong_labels,
            naive_comparisons_baseline: self.naive_comparisons_baseline - earlier.naive_comparisons_baseline,
        }
    }

    /// IDRM comparisons over naive comparisons (0 when nothing was annotated).
    pub fn effort_ratio(&self) -> f64 {
        if self.naive_comparisons_baseline == 0 {
            0.0
        } else {
            self.comparisons as f64 / self.naive_comparisons_baseline as f64
        }
    }
}

/// One-by-one comparison cost: each sample is compared against every identity
/// registered when its annotation starts. `creates_identity[i]` says whether
/// sample `i` opened a new identity, which raises the count for later samples.
pub fn naive_annotation_cost(registered: usize, creates_identity: impl IntoIterator<Item = bool>) -> u64 {
    let mut k = registered as u64;
    let mut total = 0;
    for creates in creates_identity {
        total += k;
        if creates {
            k += 1;
        }
    }
    total
}

/// Something that answers recommendation rounds.
pub trait Annotator {
    fn review(&mut self, sample: &Sample, recommendation: &Recommendation, pool: &PoolState, dataset: &Dataset) -> Decision;

    fn source(&self) -> LabelSource;

    /// Called before each loop iteration's batch.
    fn begin_iteration(&mut self, _rng: &RngStream, _iteration: usize) {}

    /// Whether assigning `decision` to `sample` is wrong; `None` when the
    /// annotator cannot know.
    fn judge(&self, _sample: &Sample, _decision: &Decision, _pool: &PoolState, _dataset: &Dataset) -> Option<bool> {
        None
    }
}

/// Annotator driven by hidden ground truth with a flat error model.
///
/// Scanning candidates in order, it accepts the true identity with
/// probability `1 - error_rate` and a wrong one with probability
/// `error_rate * confusability`. An identity's truth is its founding member's.
#[derive(Debug, Clone)]
pub struct SimulatedAnnotator {
    pub error_rate: f64,
    pub confusability: f64,
    rng: ChaCha8Rng,
}

impl SimulatedAnnotator {
    pub fn new(error_rate: f64, confusability: f64, rng: ChaCha8Rng) -> Self {
        SimulatedAnnotator {
            error_rate,
            confusability,
            rng,
        }
    }

    pub fn from_config(config: &ExperimentConfig, rng: ChaCha8Rng) -> Self {
        Self::new(config.annotator_error_rate, config.confusability_factor, rng)
    }

    fn identity_truth<'a>(pool: &PoolState, dataset: &'a Dataset, identity: &IdentityId) -> Option<&'a str> {
        let founder = pool.members(identity).ok()?.first()?;
        Some(dataset.get(founder).ok()?.truth.reveal())
    }
}

/// Runs the simulated annotator over one recommendation.
pub fn simulate_annotation(
    annotator: &mut SimulatedAnnotator,
    sample: &Sample,
    recommendation: &Recommendation,
    pool: &PoolState,
    dataset: &Dataset,
) -> Decision {
    if recommendation.is_exhausted() {
        return Decision::NewIdentity;
    }
    let truth = sample.truth.reveal();
    for (i, c) in recommendation.candidates.iter().enumerate() {
        let is_true = SimulatedAnnotator::identity_truth(pool, dataset, &c.identity_id) == Some(truth);
        let accept_p = if is_true {
            1.0 - annotator.error_rate
        } else {
            annotator.error_rate * annotator.confusability
        };
        if chance(&mut annotator.rng, accept_p) {
            return Decision::Matched {
                identity_id: c.identity_id.clone(),
                position: i + 1,
            };
        }
    }
    Decision::RejectedRound
}

impl Annotator for SimulatedAnnotator {
    fn review(&mut self, sample: &Sample, recommendation: &Recommendation, pool: &PoolState, dataset: &Dataset) -> Decision {
        simulate_annotation(self, sample, recommendation, pool, dataset)
    }

    fn source(&self) -> LabelSource {
        LabelSource::Simulated
    }

    fn begin_iteration(&mut self, rng: &RngStream, iteration: usize) {
        self.rng = rng.substream(&format!("annotate/{iteration}"));
    }

    fn judge(&self, sample: &Sample, decision: &Decision, pool: &PoolState, dataset: &Dataset) -> Option<bool> {
        let truth = sample.truth.reveal();
        Some(match decision {
            Decision::Matched { identity_id, .. } => {
                Self::identity_truth(pool, dataset, identity_id) != Some(truth)
            }
            Decision::NewIdentity => pool
                .identities()
                .keys()
                .any(|id| Self::identity_truth(pool, dataset, id) == Some(truth)),
            Decision::RejectedRound => false,
        })
    }
}

/// Result of labeling one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub sample_id: SampleId,
    pub identity_id: IdentityId,
    pub created_identity: bool,
    pub comparisons: u64,
    pub rounds: usize,
    pub wrong: Option<bool>,
}

/// Commits a final decision (`Matched` or `NewIdentity`) for a queried sample
/// and books its cost.
#[allow(clippy::too_many_arguments)]
pub fn commit_label(
    pool: &mut PoolState,
    ledger: &mut CostLedger,
    sample_id: &SampleId,
    decision: &Decision,
    comparisons: u64,
    naive_cost: u64,
    rounds: usize,
    source: LabelSource,
    wrong: Option<bool>,
) -> Result<LabelOutcome> {
    let (identity_id, created) = match decision {
        Decision::Matched { identity_id, .. } => {
            pool.assign(sample_id, identity_id, source)?;
            (identity_id.clone(), false)
        }
        Decision::NewIdentity => (pool.create_identity(sample_id, source)?, true),
        Decision::RejectedRound => {
            return Err(Error::InvalidConfig("a rejected round is not a label".into()));
        }
    };
    ledger.comparisons += comparisons;
    ledger.naive_comparisons_baseline += naive_cost;
    ledger.labels_assigned += 1;
    ledger.new_identities_created += u64::from(created);
    ledger.wrong_labels += u64::from(wrong == Some(true));
    Ok(LabelOutcome {
        sample_id: sample_id.clone(),
        identity_id,
        created_identity: created,
        comparisons,
        rounds,
        wrong,
    })
}

/// Labels one queried sample through recommendation rounds.
pub fn annotate_sample(
    model: &ModelState,
    pool: &mut PoolState,
    dataset: &Dataset,
    sample_id: &SampleId,
    annotator: &mut dyn Annotator,
    config: &ExperimentConfig,
    ledger: &mut CostLedger,
) -> Result<LabelOutcome> {
    let sample = dataset.get(sample_id)?;
    let naive = pool.identity_count() as u64;
    let ranking = rank_identities(model, pool, dataset, sample_id)?;
    let mut comparisons = 0u64;
    let mut round = 1;
    loop {
        let rec = recommendation_from_ranking(model, pool, dataset, &ranking, round, config)?;
        let decision = annotator.review(sample, &rec, pool, dataset);
        match &decision {
            Decision::RejectedRound if !rec.is_exhausted() => {
                comparisons += rec.candidates.len() as u64;
                round += 1;
                continue;
            }
            Decision::RejectedRound => {
                return Err(Error::InvalidConfig(
                    "annotator rejected an exhausted recommendation".into(),
                ));
            }
            Decision::Matched { identity_id, position } => {
                let valid = rec
                    .candidates
                    .get(position.wrapping_sub(1))
                    .is_some_and(|c| &c.identity_id == identity_id);
                if !valid {
                    return Err(Error::InvalidConfig(format!(
                        "match `{identity_id}` at position {position} is not in round {round}"
                    )));
                }
                comparisons += *position as u64;
            }
            Decision::NewIdentity => comparisons += rec.candidates.len() as u64,
        }
        let wrong = annotator.judge(sample, &decision, pool, dataset);
        return commit_label(pool, ledger, sample_id, &decision, comparisons, naive, round, annotator.source(), wrong);
    }
}

/// Labels every sample of `query` in order, moving them to the labeled set.
/// Returns the ledger increments for this batch.
pub fn annotate_batch(
    model: &ModelState,
    pool: &mut PoolState,
    dataset: &Dataset,
    query: &[SampleId],
    annotator: &mut dyn Annotator,
    config: &ExperimentConfig,
    ledger: &mut CostLedger,
) -> Result<(CostLedger, Vec<LabelOutcome>)> {
    let before = *ledger;
    let mut outcomes = Vec::with_capacity(query.len());
    for id in query {
        outcomes.push(annotate_sample(model, pool, dataset, id, annotator, config, ledger)?);
    }
    Ok((ledger.since(&before), outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::train;
    use crate::sample::Truth;
    use rand::Rng;
    use rand::SeedableRng;

    const K: usize = 25;

    /// K truths with three samples each near `5 * e_k`. The first two samples
    /// of every truth are labeled (truth k becomes `id000kk`), the third is
    /// queried.
    fn fixture() -> (Dataset, PoolState) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut samples = Vec::new();
        for k in 0..K {
            for j in 0..3 {
                let mut f: Vec<f64> = (0..K).map(|_| rng.random_range(-0.3..0.3)).collect();
                f[k] += 5.0;
                samples.push(Sample::new(format!("s{k:02}_{j}"), f, Some(j as u32), Truth::new(format!("t{k:02}"))));
            }
        }
        let ds = Dataset::new(samples).unwrap();
        let labels: Vec<(SampleId, String)> = (0..K)
            .flat_map(|k| (0..2).map(move |j| (SampleId(format!("s{k:02}_{j}")), format!("t{k:02}"))))
            .collect();
        let mut pool = PoolState::with_labels(&ds, &labels, LabelSource::GroundTruthBootstrap).unwrap();
        pool.begin_query(&query_ids()).unwrap();
        (ds, pool)
    }

    fn query_ids() -> Vec<SampleId> {
        (0..K).map(|k| SampleId(format!("s{k:02}_2"))).collect()
    }

    fn random_model(seed: u64) -> ModelState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let classes = (0..K).map(|k| IdentityId(format!("id{k:05}"))).collect();
        ModelState::from_weights(K, 4, v(4 * K), v(K * 4), v(K), v(4), 0.0, classes).unwrap()
    }

    fn trained_model(ds: &Dataset, pool: &PoolState) -> ModelState {
        train(pool, ds, &ModelConfig::default(), &RngStream::new(1), None).unwrap().0
    }

    fn config() -> ExperimentConfig {
        ExperimentConfig::default()
    }

    #[test]
    fn rounds_concatenate_to_full_sort() {
        let (ds, pool) = fixture();
        for seed in 0..5 {
            let m = random_model(seed);
            for q in query_ids() {
                let dist = m.predict_identity(ds.get(&q).unwrap()).unwrap();
                let mut oracle: Vec<(IdentityId, f64)> = m.classes().iter().cloned().zip(dist.probs().iter().copied()).collect();
                oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                let mut concat = Vec::new();
                for round in 1..=3 {
                    let rec = recommend_candidates(&m, &pool, &ds, &q, round, &config()).unwrap();
                    assert_eq!(rec.candidates.len(), if round < 3 { 10 } else { 5 });
                    assert!(rec.candidates.iter().all(|c| c.representatives.len() == 2));
                    concat.extend(rec.candidates.into_iter().map(|c| (c.identity_id, c.probability)));
                }
                assert_eq!(concat, oracle);
                assert!(concat.windows(2).all(|w| w[0].1 >= w[1].1));
                assert!(recommend_candidates(&m, &pool, &ds, &q, 4, &config()).unwrap().is_exhausted());
            }
        }
    }

    #[test]
    fn few_identities_fit_one_round() {
        let (ds, pool) = fixture();
        let cfg = ExperimentConfig { idrm_batch_size: 30, ..config() };
        let rec = recommend_candidates(&random_model(0), &pool, &ds, &query_ids()[0], 1, &cfg).unwrap();
        assert_eq!(rec.candidates.len(), K);
    }

    #[test]
    fn recommendation_errors() {
        let (ds, pool) = fixture();
        let m = random_model(0);
        assert!(matches!(recommend_candidates(&m, &pool, &ds, &"nope".into(), 1, &config()), Err(Error::UnknownSample(_))));
        assert!(matches!(recommend_candidates(&m, &pool, &ds, &"s00_0".into(), 1, &config()), Err(Error::NotQueried(_))));
        assert!(recommend_candidates(&m, &pool, &ds, &query_ids()[0], 0, &config()).is_err());
    }

    #[test]
    fn trained_model_puts_truth_first_and_labels_are_right() {
        let (ds, mut pool) = fixture();
        let m = trained_model(&ds, &pool);
        for q in query_ids() {
            let rec = recommend_candidates(&m, &pool, &ds, &q, 1, &config()).unwrap();
            let founder = &pool.members(&rec.candidates[0].identity_id).unwrap()[0];
            assert_eq!(ds.get(founder).unwrap().truth.reveal(), ds.get(&q).unwrap().truth.reveal());
        }
        let mut annotator = SimulatedAnnotator::new(0.0, 0.0, RngStream::new(0).substream("a"));
        let mut ledger = CostLedger::default();
        let (delta, outcomes) = annotate_batch(&m, &mut pool, &ds, &query_ids(), &mut annotator, &config(), &mut ledger).unwrap();
        assert_eq!(delta.wrong_labels, 0);
        assert_eq!(delta.comparisons, K as u64);
        assert_eq!(delta.naive_comparisons_baseline, (K * K) as u64);
        assert!(outcomes.iter().all(|o| o.rounds == 1 && !o.created_identity && o.wrong == Some(false)));
        assert!(pool.query().is_empty());
        pool.check_invariants(&ds).unwrap();
    }

    #[test]
    fn error_rate_one_always_opens_new_identities() {
        let (ds, mut pool) = fixture();
        let m = random_model(3);
        let mut annotator = SimulatedAnnotator::new(1.0, 0.0, RngStream::new(0).substream("a"));
        let mut ledger = CostLedger::default();
        let (delta, outcomes) = annotate_batch(&m, &mut pool, &ds, &query_ids(), &mut annotator, &config(), &mut ledger).unwrap();
        assert!(outcomes.iter().all(|o| o.created_identity && o.wrong == Some(true)));
        assert_eq!(delta.new_identities_created, K as u64);
        assert_eq!(delta.wrong_labels, K as u64);
        assert_eq!(pool.identity_count(), 2 * K);
        // Each sample scans every identity registered so far.
        assert_eq!(delta.comparisons, naive_annotation_cost(K, std::iter::repeat_n(true, K)));
        assert_eq!(delta.comparisons, delta.naive_comparisons_baseline);
    }

    #[test]
    fn comparisons_never_exceed_naive_replay() {
        for seed in 0..5 {
            let (ds, mut pool) = fixture();
            let m = random_model(seed);
            let mut annotator = SimulatedAnnotator::new(0.0, 0.0, RngStream::new(seed).substream("a"));
            let mut ledger = CostLedger::default();
            let (delta, outcomes) = annotate_batch(&m, &mut pool, &ds, &query_ids(), &mut annotator, &config(), &mut ledger).unwrap();
            let naive = naive_annotation_cost(K, outcomes.iter().map(|o| o.created_identity));
            assert_eq!(delta.naive_comparisons_baseline, naive);
            assert!(delta.comparisons <= naive);
            assert_eq!(delta.comparisons, outcomes.iter().map(|o| o.comparisons).sum::<u64>());
            assert_eq!(delta.wrong_labels, 0);
        }
    }

    #[test]
    fn noisy_annotator_is_reproducible() {
        let run = || {
            let (ds, mut pool) = fixture();
            let mut annotator = SimulatedAnnotator::new(0.3, 0.5, RngStream::new(0).substream("a"));
            let mut ledger = CostLedger::default();
            annotate_batch(&random_model(1), &mut pool, &ds, &query_ids(), &mut annotator, &config(), &mut ledger).unwrap();
            (pool, ledger)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn match_outside_round_is_rejected() {
        struct Liar;
        impl Annotator for Liar {
            fn review(&mut self, _: &Sample, rec: &Recommendation, _: &PoolState, _: &Dataset) -> Decision {
                Decision::Matched { identity_id: rec.candidates[0].identity_id.clone(), position: 2 }
            }
            fn source(&self) -> LabelSource {
                LabelSource::Human
            }
        }
        let (ds, mut pool) = fixture();
        let mut ledger = CostLedger::default();
        let r = annotate_sample(&random_model(0), &mut pool, &ds, &query_ids()[0], &mut Liar, &config(), &mut ledger);
        assert!(r.is_err());
        assert_eq!(ledger, CostLedger::default());
        assert_eq!(pool.query().len(), K);
    }

    #[test]
    fn ledger_arithmetic() {
        let a = CostLedger { comparisons: 3, labels_assigned: 1, new_identities_created: 0, wrong_labels: 1, naive_comparisons_baseline: 10 };
        let mut b = a;
        b.add(&a);
        assert_eq!(b.since(&a), a);
        assert_eq!(b.effort_ratio(), 0.3);
        assert_eq!(CostLedger::default().effort_ratio(), 0.0);
        assert_eq!(naive_annotation_cost(3, [false, true, false]), 3 + 3 + 4);
        let mut pool = fixture().1;
        let mut ledger = CostLedger::default();
        assert!(commit_label(&mut pool, &mut ledger, &query_ids()[0], &Decision::RejectedRound, 1, 1, 1, LabelSource::Human, None).is_err());
    }
}
