//! Pool partitions: labeled (T), unlabeled (U) and the current query set (Q).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sample::{Dataset, SampleId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentityId(pub String);

impl IdentityId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IdentityId {
    fn from(s: &str) -> Self {
        IdentityId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Simulated,
    Human,
    GroundTruthBootstrap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityLabel {
    pub identity_id: IdentityId,
    pub source: LabelSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    labeled: BTreeMap<SampleId, IdentityLabel>,
    unlabeled: BTreeSet<SampleId>,
    query: Vec<SampleId>,
    identities: BTreeMap<IdentityId, Vec<SampleId>>,
    next_identity: u64,
}

impl PoolState {
    /// Everything unlabeled, no identities.
    pub fn all_unlabeled(dataset: &Dataset) -> Self {
        PoolState {
            labeled: BTreeMap::new(),
            unlabeled: dataset.iter().map(|s| s.sample_id.clone()).collect(),
            query: Vec::new(),
            identities: BTreeMap::new(),
            next_identity: 0,
        }
    }

    /// Labels the given samples, mapping each distinct group key to a fresh
    /// identity in order of first appearance. Everything else stays unlabeled.
    pub fn with_labels<K: AsRef<str>>(
        dataset: &Dataset,
        labels: &[(SampleId, K)],
        source: LabelSource,
    ) -> Result<Self> {
        let mut pool = PoolState::all_unlabeled(dataset);
        let mut identity_of: HashMap<&str, IdentityId> = HashMap::new();
        for (sample_id, key) in labels {
            if !pool.unlabeled.remove(sample_id) {
                return Err(Error::UnknownSample(sample_id.0.clone()));
            }
            let identity = match identity_of.get(key.as_ref()) {
                Some(id) => id.clone(),
                None => {
                    let id = pool.fresh_identity();
                    pool.identities.insert(id.clone(), Vec::new());
                    identity_of.insert(key.as_ref(), id.clone());
                    id
                }
            };
            pool.insert_label(sample_id.clone(), identity, source);
        }
        Ok(pool)
    }

    pub fn labeled(&self) -> &BTreeMap<SampleId, IdentityLabel> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<SampleId> {
        &self.unlabeled
    }

    pub fn query(&self) -> &[SampleId] {
        &self.query
    }

    pub fn identities(&self) -> &BTreeMap<IdentityId, Vec<SampleId>> {
        &self.identities
    }

    pub fn identity_count(&self) -> usize {
        self.identities.len()
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.len()
    }

    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len() + self.query.len()
    }

    pub fn labeled_fraction(&self) -> f64 {
        self.labeled.len() as f64 / self.total().max(1) as f64
    }

    pub fn members(&self, identity: &IdentityId) -> Result<&[SampleId]> {
        self.identities
            .get(identity)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownIdentity(identity.0.clone()))
    }

    pub fn label_of(&self, sample: &SampleId) -> Option<&IdentityLabel> {
        self.labeled.get(sample)
    }

    /// Moves `ids` from U to the end of Q.
    pub fn begin_query(&mut self, ids: &[SampleId]) -> Result<()> {
        let unique: BTreeSet<&SampleId> = ids.iter().collect();
        if unique.len() != ids.len() {
            return Err(Error::PoolInvariant("duplicate ids in query batch".into()));
        }
        if let Some(missing) = ids.iter().find(|id| !self.unlabeled.contains(*id)) {
            return Err(Error::PoolInvariant(format!(
                "`{missing}` is not unlabeled"
            )));
        }
        for id in ids {
            self.unlabeled.remove(id);
            self.query.push(id.clone());
        }
        Ok(())
    }

    fn take_from_query(&mut self, sample: &SampleId) -> Result<()> {
        let pos = self
            .query
            .iter()
            .position(|q| q == sample)
            .ok_or_else(|| Error::NotQueried(sample.0.clone()))?;
        self.query.remove(pos);
        Ok(())
    }

    /// Labels a queried sample with an already registered identity.
    pub fn assign(&mut self, sample: &SampleId, identity: &IdentityId, source: LabelSource) -> Result<()> {
        if !self.identities.contains_key(identity) {
            return Err(Error::UnknownIdentity(identity.0.clone()));
        }
        self.take_from_query(sample)?;
        self.insert_label(sample.clone(), identity.clone(), source);
        Ok(())
    }

    /// Registers a new identity whose first member is the queried `founder`.
    pub fn create_identity(&mut self, founder: &SampleId, source: LabelSource) -> Result<IdentityId> {
        self.take_from_query(founder)?;
        let id = self.fresh_identity();
        self.identities.insert(id.clone(), Vec::new());
        self.insert_label(founder.clone(), id.clone(), source);
        Ok(id)
    }

    fn fresh_identity(&mut self) -> IdentityId {
        let id = IdentityId(format!("id{:05}", self.next_identity));
        self.next_identity += 1;
        id
    }

    fn insert_label(&mut self, sample: SampleId, identity: IdentityId, source: LabelSource) {
        self.identities
            .get_mut(&identity)
            .expect("identity registered")
            .push(sample.clone());
        self.labeled.insert(
            sample,
            IdentityLabel {
                identity_id: identity,
                source,
            },
        );
    }

    /// Checks disjointness, exhaustiveness against `dataset`, and registry
    /// consistency.
    pub fn check_invariants(&self, dataset: &Dataset) -> Result<()> {
        let fail = |m: String| Err(Error::PoolInvariant(m));
        let query: BTreeSet<&SampleId> = self.query.iter().collect();
        if query.len() != self.query.len() {
            return fail("duplicate entries in query".into());
        }
        for id in &self.query {
            if self.labeled.contains_key(id) || self.unlabeled.contains(id) {
                return fail(format!("`{id}` is in query and another partition"));
            }
        }
        if let Some(id) = self.unlabeled.iter().find(|id| self.labeled.contains_key(*id)) {
            return fail(format!("`{id}` is both labeled and unlabeled"));
        }
        if self.total() != dataset.len() {
            return fail(format!(
                "partitions cover {} samples, dataset has {}",
                self.total(),
                dataset.len()
            ));
        }
        let all = self
            .labeled
            .keys()
            .chain(self.unlabeled.iter())
            .chain(self.query.iter());
        for id in all {
            if !dataset.contains(id) {
                return fail(format!("`{id}` is not in the dataset"));
            }
        }
        let mut seen = 0;
        for (identity, members) in &self.identities {
            if members.is_empty() {
                return fail(format!("identity `{identity}` has no members"));
            }
            for m in members {
                match self.labeled.get(m) {
                    Some(l) if &l.identity_id == identity => seen += 1,
                    _ => return fail(format!("member `{m}` of `{identity}` is not labeled with it")),
                }
            }
        }
        if seen != self.labeled.len() {
            return fail("registry members do not match labeled set".into());
        }
        Ok(())
    }
}

/// Splits the dataset into a labeled seed set and an unlabeled pool.
///
/// Seeds `round(init_labeled_fraction * n)` uniformly drawn samples, then
/// raises the set to at least two identities and gives each seeded identity a
/// second member where one exists, so that the verification loss has
/// positive pairs. Seed labels come from ground truth.
pub fn partition_dataset(
    dataset: &Dataset,
    init_labeled_fraction: f64,
    rng: &RngStream,
) -> Result<PoolState> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&init_labeled_fraction) {
        return Err(Error::InvalidConfig(format!(
            "init_labeled_fraction {init_labeled_fraction} not in [0, 1]"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.substream("partition"));

    let truths: Vec<&str> = order
        .iter()
        .map(|&i| dataset.samples()[i].truth.reveal())
        .collect();
    let target = ((init_labeled_fraction * n as f64).round() as usize).min(n);

    let mut seeded = vec![false; n];
    seeded[..target].fill(true);

    let seeded_truths = |seeded: &[bool]| -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        for p in (0..n).filter(|&p| seeded[p]) {
            if !v.contains(&truths[p]) {
                v.push(truths[p]);
            }
        }
        v
    };
    // at least two identities
    loop {
        let present = seeded_truths(&seeded);
        if present.len() >= 2 {
            break;
        }
        match (0..n).find(|&p| !seeded[p] && !present.contains(&truths[p])) {
            Some(p) => seeded[p] = true,
            None => break,
        }
    }
    // a second member for every seeded identity, where one exists
    for truth in seeded_truths(&seeded) {
        let have = (0..n).filter(|&p| seeded[p] && truths[p] == truth).count();
        if have < 2 {
            if let Some(p) = (0..n).find(|&p| !seeded[p] && truths[p] == truth) {
                seeded[p] = true;
            }
        }
    }

    let labels: Vec<(SampleId, &str)> = (0..n)
        .filter(|&p| seeded[p])
        .map(|p| (dataset.samples()[order[p]].sample_id.clone(), truths[p]))
        .collect();
    let pool = PoolState::with_labels(dataset, &labels, LabelSource::GroundTruthBootstrap)?;
    pool.check_invariants(dataset)?;
    Ok(pool)
}
