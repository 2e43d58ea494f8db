//! Experiment state shared by all HTTP sessions.
//!
//! Every mutation goes through [`ServiceState`] behind one mutex. Retraining
//! runs on a copy of the experiment outside the lock; while it runs the queue
//! is empty, so nothing can be labeled against the old model.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use hardmine::annotation::{commit_label, rank_identities, recommendation_from_ranking, CostLedger, Decision, IdentityRanking};
use hardmine::eval::RetrievalMetrics;
use hardmine::experiment::{Experiment, IterationRecord, MetricsLine, Termination};
use hardmine::ingest::checkpoint_save;
use hardmine::{Dataset, ExperimentConfig, IdentityId, LabelSource, SampleId, Strategy};

use crate::error::ApiError;

pub const DEFAULT_ASSIGNMENT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Assignments idle for longer than this go back to the queue.
    pub assignment_timeout: Duration,
    /// Static console assets; thumbnails live under `thumbnails/`.
    pub assets: Option<PathBuf>,
    /// Saved after every retrain when set.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            assignment_timeout: DEFAULT_ASSIGNMENT_TIMEOUT,
            assets: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Annotating,
    Retraining,
    Finished,
}

#[derive(Debug)]
struct Assignment {
    session: String,
    ranking: IdentityRanking,
    /// Identities registered when annotation of the sample started.
    naive_cost: u64,
    rounds_seen: usize,
    touched: Instant,
}

#[derive(Debug, Default)]
struct Session {
    current: Option<SampleId>,
    /// Replies to already applied label actions, keyed by client action id.
    actions: HashMap<String, LabelAck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub pending: usize,
    pub iteration: usize,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRef {
    pub sample_id: SampleId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub identity_id: IdentityId,
    pub probability: f64,
    /// Labeled members of the identity.
    pub member_count: usize,
    pub representatives: Vec<SampleRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub sample: SampleRef,
    pub round: usize,
    /// Rounds available for this sample; later rounds are empty.
    pub total_rounds: usize,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextResponse {
    pub phase: Phase,
    /// `None` when nothing is left to hand out in this phase.
    pub recommendation: Option<RecommendationView>,
    pub pending: usize,
    pub iteration: usize,
    pub model_version: u64,
}

/// Target of a label submission: an identity id or the literal `"new"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum LabelTarget {
    New,
    Identity(IdentityId),
}

impl From<String> for LabelTarget {
    fn from(s: String) -> Self {
        if s == "new" {
            LabelTarget::New
        } else {
            LabelTarget::Identity(IdentityId(s))
        }
    }
}

impl From<LabelTarget> for String {
    fn from(t: LabelTarget) -> Self {
        match t {
            LabelTarget::New => "new".into(),
            LabelTarget::Identity(id) => id.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub sample_id: SampleId,
    pub identity_id: LabelTarget,
    pub round: usize,
    /// 1-based position within the round; ignored for `"new"`.
    #[serde(default)]
    pub position: Option<usize>,
    /// Rejected with `stale_model` when it differs from the current version.
    #[serde(default)]
    pub model_version: Option<u64>,
    /// Client-generated id making retries idempotent.
    #[serde(default)]
    pub action_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAck {
    pub sample_id: SampleId,
    pub identity_id: IdentityId,
    pub created_identity: bool,
    pub comparisons: u64,
    pub ledger_delta: CostLedger,
    /// True when this label drained the batch and a retrain follows.
    pub batch_complete: bool,
    pub pending: usize,
    pub iteration: usize,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub phase: Phase,
    pub iteration: usize,
    pub labeled_count: usize,
    pub labeled_fraction: f64,
    pub train_samples: usize,
    pub identities: usize,
    pub pending: usize,
    pub assigned: usize,
    pub sessions: usize,
    pub strategy: Strategy,
    pub termination: Option<Termination>,
    pub last_error: Option<String>,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerView {
    pub ledger: CostLedger,
    /// Increments since the current batch was selected.
    pub batch_delta: CostLedger,
    pub per_iteration: Vec<CostLedger>,
    pub iteration: usize,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    /// Evaluation of the model currently serving recommendations.
    pub current: Option<RetrievalMetrics>,
    pub history: Vec<MetricsLine>,
    pub iteration: usize,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveView {
    pub records: Vec<IterationRecord>,
    pub iteration: usize,
    pub model_version: u64,
}

/// One experiment driven by human annotation sessions.
#[derive(Debug)]
pub struct ServiceState {
    experiment: Experiment,
    options: ServiceOptions,
    sessions: BTreeMap<String, Session>,
    assignments: BTreeMap<SampleId, Assignment>,
    next_session: u64,
    model_version: u64,
    /// The batch is drained and waits for a retrain.
    retraining: bool,
    retrain_running: bool,
    last_error: Option<String>,
    thumbnails: HashMap<SampleId, String>,
}

impl ServiceState {
    /// Trains the first model and selects the first batch.
    pub fn new(
        dataset: &Dataset,
        config: ExperimentConfig,
        strategy: Strategy,
        options: ServiceOptions,
    ) -> hardmine::Result<Self> {
        let mut experiment = Experiment::new(dataset, config, strategy)?;
        experiment.begin_cycle()?;
        let thumbnails = match &options.assets {
            Some(dir) => scan_thumbnails(dir, experiment.train_split()),
            None => HashMap::new(),
        };
        let state = ServiceState {
            experiment,
            options,
            sessions: BTreeMap::new(),
            assignments: BTreeMap::new(),
            next_session: 0,
            model_version: 1,
            retraining: false,
            retrain_running: false,
            last_error: None,
            thumbnails,
        };
        state.save_checkpoint()?;
        Ok(state)
    }

    pub fn options(&self) -> &ServiceOptions {
        &self.options
    }

    pub fn experiment(&self) -> &Experiment {
        &self.experiment
    }

    pub fn model_version(&self) -> u64 {
        self.model_version
    }

    fn iteration(&self) -> usize {
        self.experiment.state().records().len()
    }

    fn phase(&self) -> Phase {
        if self.retraining {
            Phase::Retraining
        } else if self.experiment.is_finished() {
            Phase::Finished
        } else {
            Phase::Annotating
        }
    }

    fn pending(&self) -> usize {
        self.experiment.state().pool().query().len()
    }

    fn sample_ref(&self, id: &SampleId) -> SampleRef {
        SampleRef {
            sample_id: id.clone(),
            thumbnail_url: self.thumbnails.get(id).cloned(),
        }
    }

    /// Returns abandoned samples to the queue.
    pub fn expire(&mut self, now: Instant) {
        let timeout = self.options.assignment_timeout;
        let stale: Vec<SampleId> = self
            .assignments
            .iter()
            .filter(|(_, a)| now.saturating_duration_since(a.touched) > timeout)
            .map(|(id, _)| id.clone())
            .collect();
        for id in stale {
            if let Some(a) = self.assignments.remove(&id) {
                if let Some(s) = self.sessions.get_mut(&a.session) {
                    if s.current.as_ref() == Some(&id) {
                        s.current = None;
                    }
                }
            }
        }
    }

    pub fn open_session(&mut self) -> SessionInfo {
        let id = format!("s{:04}", self.next_session);
        self.next_session += 1;
        self.sessions.insert(id.clone(), Session::default());
        SessionInfo {
            session_id: id,
            pending: self.pending(),
            iteration: self.iteration(),
            model_version: self.model_version,
        }
    }

    fn session_mut(&mut self, id: &str) -> Result<&mut Session, ApiError> {
        self.sessions
            .get_mut(id)
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session `{id}`")))
    }

    /// The session's current sample at `round` (default 1), assigning the
    /// next free queued sample when the session holds none.
    pub fn next(&mut self, session_id: &str, round: Option<usize>, now: Instant) -> Result<NextResponse, ApiError> {
        self.expire(now);
        let current = self.session_mut(session_id)?.current.clone();
        let round = round.unwrap_or(1);
        if round == 0 {
            return Err(ApiError::bad_request("invalid_round", "rounds are 1-based"));
        }
        let phase = self.phase();
        let sample_id = match current {
            Some(id) => id,
            None if round > 1 => {
                return Err(ApiError::conflict(
                    "no_assignment",
                    "session holds no sample; request round 1 to get one",
                ));
            }
            None if phase != Phase::Annotating => return Ok(self.empty_next(phase)),
            None => {
                let free = self
                    .experiment
                    .state()
                    .pool()
                    .query()
                    .iter()
                    .find(|id| !self.assignments.contains_key(*id))
                    .cloned();
                let Some(id) = free else {
                    return Ok(self.empty_next(phase));
                };
                let model = self.experiment.cycle_model().ok_or_else(|| ApiError::internal("no open cycle"))?;
                let pool = self.experiment.state().pool();
                let ranking = rank_identities(model, pool, self.experiment.train_split(), &id)?;
                self.assignments.insert(
                    id.clone(),
                    Assignment {
                        session: session_id.to_string(),
                        ranking,
                        naive_cost: pool.identity_count() as u64,
                        rounds_seen: 0,
                        touched: now,
                    },
                );
                self.session_mut(session_id)?.current = Some(id.clone());
                id
            }
        };
        let view = self.recommendation_view(&sample_id, round)?;
        let a = self.assignments.get_mut(&sample_id).expect("assigned sample");
        a.rounds_seen = a.rounds_seen.max(round);
        a.touched = now;
        Ok(NextResponse {
            phase,
            recommendation: Some(view),
            pending: self.pending(),
            iteration: self.iteration(),
            model_version: self.model_version,
        })
    }

    fn empty_next(&self, phase: Phase) -> NextResponse {
        NextResponse {
            phase,
            recommendation: None,
            pending: self.pending(),
            iteration: self.iteration(),
            model_version: self.model_version,
        }
    }

    fn recommendation_view(&self, sample_id: &SampleId, round: usize) -> Result<RecommendationView, ApiError> {
        let a = &self.assignments[sample_id];
        let model = self.experiment.cycle_model().ok_or_else(|| ApiError::internal("no open cycle"))?;
        let pool = self.experiment.state().pool();
        let config = self.experiment.state().config();
        let rec = recommendation_from_ranking(model, pool, self.experiment.train_split(), &a.ranking, round, config)?;
        let candidates = rec
            .candidates
            .iter()
            .map(|c| CandidateView {
                identity_id: c.identity_id.clone(),
                probability: c.probability,
                member_count: pool.members(&c.identity_id).map_or(0, <[_]>::len),
                representatives: c.representatives.iter().map(|r| self.sample_ref(r)).collect(),
            })
            .collect();
        Ok(RecommendationView {
            sample: self.sample_ref(sample_id),
            round,
            total_rounds: a.ranking.rounds(config.idrm_batch_size),
            candidates,
        })
    }

    /// Applies one label. When it drains the batch the caller must run
    /// [`retrain`] before the queue refills.
    pub fn label(&mut self, session_id: &str, req: &LabelRequest, now: Instant) -> Result<LabelAck, ApiError> {
        self.expire(now);
        let session = self.session_mut(session_id)?;
        if let Some(ack) = req.action_id.as_ref().and_then(|a| session.actions.get(a)) {
            return Ok(ack.clone());
        }
        if session.current.as_ref() != Some(&req.sample_id) {
            return Err(ApiError::conflict(
                "not_assigned",
                format!("sample `{}` is not assigned to session `{session_id}`", req.sample_id),
            ));
        }
        if let Some(v) = req.model_version {
            if v != self.model_version {
                return Err(ApiError::conflict(
                    "stale_model",
                    format!("model version {v} is stale; current is {}", self.model_version),
                ));
            }
        }
        let per_round = self.experiment.state().config().idrm_batch_size;
        let a = &self.assignments[&req.sample_id];
        if req.round == 0 || req.round > a.rounds_seen.max(1) {
            return Err(ApiError::bad_request(
                "invalid_round",
                format!("round {} has not been shown (seen {})", req.round, a.rounds_seen),
            ));
        }
        let (decision, comparisons) = match &req.identity_id {
            LabelTarget::New => (Decision::NewIdentity, a.ranking.shown_through(req.round, per_round)),
            LabelTarget::Identity(identity) => {
                let position = req
                    .position
                    .ok_or_else(|| ApiError::bad_request("invalid_label", "position is required for a match"))?;
                let slot = a.ranking.round_slice(req.round, per_round).get(position.wrapping_sub(1));
                if slot.map(|(id, _)| id) != Some(identity) {
                    return Err(ApiError::bad_request(
                        "invalid_label",
                        format!("`{identity}` is not at position {position} of round {}", req.round),
                    ));
                }
                let decision = Decision::Matched {
                    identity_id: identity.clone(),
                    position,
                };
                (decision, a.ranking.shown_through(req.round - 1, per_round) + position)
            }
        };
        let naive = a.naive_cost;
        let (pool, ledger, _) = self.experiment.labeling_parts();
        let before = *ledger;
        let outcome = commit_label(
            pool,
            ledger,
            &req.sample_id,
            &decision,
            comparisons as u64,
            naive,
            req.round,
            LabelSource::Human,
            None,
        )?;
        let delta = ledger.since(&before);
        let batch_complete = pool.query().is_empty();
        self.assignments.remove(&req.sample_id);
        let ack = LabelAck {
            sample_id: outcome.sample_id,
            identity_id: outcome.identity_id,
            created_identity: outcome.created_identity,
            comparisons: outcome.comparisons,
            ledger_delta: delta,
            batch_complete,
            pending: self.pending(),
            iteration: self.iteration(),
            model_version: self.model_version,
        };
        if batch_complete {
            self.retraining = true;
        }
        let session = self.session_mut(session_id)?;
        session.current = None;
        if let Some(a) = &req.action_id {
            session.actions.insert(a.clone(), ack.clone());
        }
        Ok(ack)
    }

    fn save_checkpoint(&self) -> hardmine::Result<()> {
        match &self.options.checkpoint {
            Some(path) => checkpoint_save(self.experiment.state(), path),
            None => Ok(()),
        }
    }

    pub fn status(&self) -> StatusView {
        let st = self.experiment.state();
        StatusView {
            phase: self.phase(),
            iteration: self.iteration(),
            labeled_count: st.pool().labeled_count(),
            labeled_fraction: st.pool().labeled_fraction(),
            train_samples: self.experiment.train_split().len(),
            identities: st.pool().identity_count(),
            pending: self.pending(),
            assigned: self.assignments.len(),
            sessions: self.sessions.len(),
            strategy: st.strategy(),
            termination: st.termination(),
            last_error: self.last_error.clone(),
            model_version: self.model_version,
        }
    }

    pub fn ledger(&self) -> LedgerView {
        let st = self.experiment.state();
        let batch_delta = st
            .open_cycle()
            .map_or_else(CostLedger::default, |o| st.ledger().since(&o.ledger_before));
        LedgerView {
            ledger: *st.ledger(),
            batch_delta,
            per_iteration: st.records().iter().map(|r| r.ledger_delta).collect(),
            iteration: self.iteration(),
            model_version: self.model_version,
        }
    }

    pub fn metrics(&self) -> MetricsView {
        let st = self.experiment.state();
        let current = match st.open_cycle() {
            Some(o) => o.metrics,
            None => st.records().last().and_then(|r| r.metrics),
        };
        MetricsView {
            current,
            history: st.records().iter().filter_map(IterationRecord::metrics_line).collect(),
            iteration: self.iteration(),
            model_version: self.model_version,
        }
    }

    pub fn curve(&self) -> CurveView {
        CurveView {
            records: self.experiment.state().records().to_vec(),
            iteration: self.iteration(),
            model_version: self.model_version,
        }
    }
}

/// Closes the drained batch, retrains and selects the next one. The lock is
/// released while training; the queue stays empty meanwhile.
pub fn retrain(shared: &std::sync::Mutex<ServiceState>) -> Result<(), ApiError> {
    let mut next = {
        let mut st = shared.lock().expect("service lock");
        if !st.retraining || st.retrain_running {
            return Ok(());
        }
        st.retrain_running = true;
        st.experiment.clone()
    };
    let result = next.finish_cycle().map(|_| ()).and_then(|()| next.begin_cycle().map(|_| ()));
    let mut st = shared.lock().expect("service lock");
    st.retrain_running = false;
    match result {
        Ok(()) => {
            st.retraining = false;
            st.experiment = next;
            st.model_version += 1;
            st.last_error = None;
            if let Err(e) = st.save_checkpoint() {
                st.last_error = Some(format!("checkpoint: {e}"));
            }
            Ok(())
        }
        Err(e) => {
            st.last_error = Some(e.to_string());
            Err(e.into())
        }
    }
}

/// Maps sample ids to thumbnail URLs for files named `<sample_id>.<ext>`
/// under `<assets>/thumbnails`.
fn scan_thumbnails(assets: &Path, train: &Dataset) -> HashMap<SampleId, String> {
    let Ok(entries) = std::fs::read_dir(assets.join("thumbnails")) else {
        return HashMap::new();
    };
    entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let stem = Path::new(&name).file_stem()?.to_str()?.to_string();
            let id = SampleId(stem);
            train.contains(&id).then(|| (id, format!("/thumbnails/{name}")))
        })
        .collect()
}
