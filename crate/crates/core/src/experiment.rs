//! The active learning loop.
//!
//! Each cycle trains a fresh model on the labeled set, evaluates it on the
//! held-out identities, checks the stopping rules, selects a query batch and
//! has it annotated. One [`IterationRecord`] is emitted per cycle. The loop
//! stops when the target metric is met, the unlabeled pool is empty, or the
//! labeled fraction reaches the budget (the last batch is capped so the
//! budget is never overshot).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{annotate_batch, Annotator, CostLedger, SimulatedAnnotator};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, RetrievalMetrics, Similarity};
use crate::ingest::split_by_identity;
use crate::model::{train, ModelState, TrainSummary};
use crate::pool::{partition_dataset, PoolState};
use crate::rng::RngStream;
use crate::sample::{Dataset, SampleId, TruthSeal};
use crate::selection::{select_batch_sized, AuditEntry, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetReached,
    TargetReached,
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Labeled samples the model of this iteration was trained on.
    pub labeled_count: usize,
    pub labeled_fraction: f64,
    pub strategy: Strategy,
    pub metrics: Option<RetrievalMetrics>,
    pub train_loss: f64,
    pub verification_skipped: bool,
    pub model_checksum: String,
    /// Samples selected and annotated in this cycle.
    pub queried: usize,
    pub ledger_delta: CostLedger,
    /// Cumulative ledger after this cycle's annotation.
    pub ledger: CostLedger,
}

/// Flat metrics line as written per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub iteration: usize,
    pub labeled_fraction: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub map: f64,
    pub excluded_queries: usize,
}

impl IterationRecord {
    pub fn metrics_line(&self) -> Option<MetricsLine> {
        self.metrics.map(|m| MetricsLine {
            iteration: self.iteration,
            labeled_fraction: self.labeled_fraction,
            rank1: m.rank1,
            rank5: m.rank5,
            rank10: m.rank10,
            map: m.map,
            excluded_queries: m.excluded_queries,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub strategy: Strategy,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl ExperimentReport {
    pub fn final_ledger(&self) -> CostLedger {
        self.records.last().map(|r| r.ledger).unwrap_or_default()
    }

    /// Learning curve, one line per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,labeled_count,labeled_fraction,rank1,rank5,rank10,map,train_loss,queried,comparisons,naive_comparisons,wrong_labels\n",
        );
        for r in &self.records {
            let m = |f: fn(&RetrievalMetrics) -> f64| r.metrics.as_ref().map(f).map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.labeled_count,
                r.labeled_fraction,
                m(|m| m.rank1),
                m(|m| m.rank5),
                m(|m| m.rank10),
                m(|m| m.map),
                r.train_loss,
                r.queried,
                r.ledger.comparisons,
                r.ledger.naive_comparisons_baseline,
                r.ledger.wrong_labels,
            );
        }
        out
    }
}

/// A cycle that has trained, evaluated and selected, and now waits for its
/// query batch to be labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenCycle {
    pub model: ModelState,
    pub summary: TrainSummary,
    pub metrics: Option<RetrievalMetrics>,
    pub labeled_count: usize,
    pub query: Vec<SampleId>,
    pub audit: Vec<AuditEntry>,
    pub ledger_before: CostLedger,
}

/// Serializable state of a running experiment. Together with the dataset it
/// fully determines the rest of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    config: ExperimentConfig,
    strategy: Strategy,
    rng: RngStream,
    pool: PoolState,
    ledger: CostLedger,
    records: Vec<IterationRecord>,
    last_model: Option<ModelState>,
    open: Option<OpenCycle>,
    termination: Option<Termination>,
}

impl ExperimentState {
    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Root stream of the run; iterations derive their streams from it.
    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn iteration(&self) -> usize {
        self.records.len()
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn open_cycle(&self) -> Option<&OpenCycle> {
        self.open.as_ref()
    }

    pub fn last_model(&self) -> Option<&ModelState> {
        self.last_model.as_ref()
    }
}

/// What [`Experiment::begin_cycle`] produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CycleStart {
    /// A batch is waiting for labels.
    Query(Vec<SampleId>),
    Finished(Termination),
}

/// A running experiment: the state plus the train/eval split it works on.
#[derive(Debug, Clone)]
pub struct Experiment {
    state: ExperimentState,
    train: Dataset,
    eval: Option<Dataset>,
}

impl Experiment {
    /// Splits the dataset, seeds the labeled pool and validates the config.
    pub fn new(dataset: &Dataset, config: ExperimentConfig, strategy: Strategy) -> Result<Self> {
        config.validate()?;
        let rng = RngStream::new(config.seed);
        let (train, eval) = split_by_identity(dataset, config.eval_fraction, &rng)?;
        if (config.batch_fraction * train.len() as f64).round() < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "batch_fraction {} gives empty batches on {} samples",
                config.batch_fraction,
                train.len()
            )));
        }
        let pool = partition_dataset(&train, config.init_labeled_fraction, &rng)?;
        Ok(Experiment {
            state: ExperimentState {
                config,
                strategy,
                rng,
                pool,
                ledger: CostLedger::default(),
                records: Vec::new(),
                last_model: None,
                open: None,
                termination: None,
            },
            train,
            eval,
        })
    }

    /// Continues from a saved state on the same dataset.
    pub fn resume(dataset: &Dataset, state: ExperimentState) -> Result<Self> {
        let (train, eval) = split_by_identity(dataset, state.config.eval_fraction, &state.rng)?;
        state.pool.check_invariants(&train)?;
        Ok(Experiment { state, train, eval })
    }

    pub fn state(&self) -> &ExperimentState {
        &self.state
    }

    pub fn into_state(self) -> ExperimentState {
        self.state
    }

    pub fn train_split(&self) -> &Dataset {
        &self.train
    }

    pub fn eval_split(&self) -> Option<&Dataset> {
        self.eval.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.state.termination.is_some()
    }

    fn budget_count(&self) -> usize {
        (self.state.config.budget_fraction * self.train.len() as f64).round() as usize
    }

    /// Trains and evaluates this iteration's model, then either terminates or
    /// selects the next query batch (moving it from U to Q).
    pub fn begin_cycle(&mut self) -> Result<CycleStart> {
        if let Some(t) = self.state.termination {
            return Ok(CycleStart::Finished(t));
        }
        if let Some(open) = &self.state.open {
            return Ok(CycleStart::Query(open.query.clone()));
        }
        let st = &mut self.state;
        let iteration = st.records.len();
        let iter_rng = st.rng.derive(&format!("iteration/{iteration}"));
        let (model, summary) = train(&st.pool, &self.train, &st.config.model, &iter_rng, st.last_model.as_ref())?;
        let metrics = match &self.eval {
            Some(eval) => Some(evaluate_model(&model, eval, Similarity::default())?),
            None => None,
        };
        let labeled_count = st.pool.labeled_count();

        let target_hit = match (st.config.target_metric, metrics) {
            (Some(t), Some(m)) => m.get(t.metric) >= t.threshold,
            _ => false,
        };
        let budget = self.budget_count();
        let st = &mut self.state;
        let termination = if target_hit {
            Some(Termination::TargetReached)
        } else if st.pool.unlabeled().is_empty() {
            Some(Termination::PoolExhausted)
        } else if labeled_count >= budget {
            Some(Termination::BudgetReached)
        } else {
            None
        };

        let query = match termination {
            Some(_) => Vec::new(),
            None => {
                let wanted = (st.config.batch_fraction * self.train.len() as f64).round() as usize;
                let size = wanted.min(budget - labeled_count);
                let _seal = TruthSeal::enter();
                let sel = select_batch_sized(st.strategy, &model, &st.pool, &self.train, &st.config, &iter_rng, size)?;
                st.pool.begin_query(&sel.query)?;
                st.open = Some(OpenCycle {
                    model: model.clone(),
                    summary: summary.clone(),
                    metrics,
                    labeled_count,
                    query: sel.query.clone(),
                    audit: sel.audit,
                    ledger_before: st.ledger,
                });
                sel.query
            }
        };
        if let Some(t) = termination {
            st.records.push(IterationRecord {
                iteration,
                labeled_count,
                labeled_fraction: labeled_count as f64 / self.train.len() as f64,
                strategy: st.strategy,
                metrics,
                train_loss: summary.final_loss,
                verification_skipped: summary.verification_skipped,
                model_checksum: model.checksum(),
                queried: 0,
                ledger_delta: CostLedger::default(),
                ledger: st.ledger,
            });
            st.last_model = Some(model);
            st.termination = Some(t);
            return Ok(CycleStart::Finished(t));
        }
        Ok(CycleStart::Query(query))
    }

    /// Model of the open cycle, used to recommend identities.
    pub fn cycle_model(&self) -> Option<&ModelState> {
        self.state.open.as_ref().map(|o| &o.model)
    }

    /// Mutable pool and ledger for committing labels during an open cycle.
    pub fn labeling_parts(&mut self) -> (&mut PoolState, &mut CostLedger, &Dataset) {
        (&mut self.state.pool, &mut self.state.ledger, &self.train)
    }

    /// Annotates the open cycle's whole batch with `annotator`.
    pub fn annotate_open_cycle(&mut self, annotator: &mut dyn Annotator) -> Result<CostLedger> {
        let open = self
            .state
            .open
            .as_ref()
            .ok_or_else(|| Error::PoolInvariant("no open cycle".into()))?;
        let (delta, _) = annotate_batch(
            &open.model,
            &mut self.state.pool,
            &self.train,
            &open.query,
            annotator,
            &self.state.config,
            &mut self.state.ledger,
        )?;
        Ok(delta)
    }

    /// Closes the open cycle once its batch is fully labeled and records it.
    pub fn finish_cycle(&mut self) -> Result<&IterationRecord> {
        let st = &mut self.state;
        let open = st.open.take().ok_or_else(|| Error::PoolInvariant("no open cycle".into()))?;
        if !st.pool.query().is_empty() {
            let pending = st.pool.query().len();
            st.open = Some(open);
            return Err(Error::PoolInvariant(format!("{pending} queried samples still unlabeled")));
        }
        st.pool.check_invariants(&self.train)?;
        if st.pool.labeled_count() != open.labeled_count + open.query.len() {
            return Err(Error::PoolInvariant("labeled set did not grow by the batch size".into()));
        }
        st.records.push(IterationRecord {
            iteration: st.records.len(),
            labeled_count: open.labeled_count,
            labeled_fraction: open.labeled_count as f64 / self.train.len() as f64,
            strategy: st.strategy,
            metrics: open.metrics,
            train_loss: open.summary.final_loss,
            verification_skipped: open.summary.verification_skipped,
            model_checksum: open.model.checksum(),
            queried: open.query.len(),
            ledger_delta: st.ledger.since(&open.ledger_before),
            ledger: st.ledger,
        });
        st.last_model = Some(open.model);
        Ok(st.records.last().expect("just pushed"))
    }

    /// One full cycle with `annotator`. Returns the termination once reached.
    pub fn step(&mut self, annotator: &mut dyn Annotator) -> Result<Option<Termination>> {
        match self.begin_cycle()? {
            CycleStart::Finished(t) => Ok(Some(t)),
            CycleStart::Query(_) => {
                annotator.begin_iteration(&self.state.rng, self.state.records.len());
                self.annotate_open_cycle(annotator)?;
                self.finish_cycle()?;
                Ok(None)
            }
        }
    }

    /// Runs until termination.
    pub fn run(&mut self, annotator: &mut dyn Annotator) -> Result<ExperimentReport> {
        while self.step(annotator)?.is_none() {}
        self.report()
    }

    pub fn report(&self) -> Result<ExperimentReport> {
        let termination = self
            .state
            .termination
            .ok_or_else(|| Error::PoolInvariant("experiment has not terminated".into()))?;
        Ok(ExperimentReport {
            config: self.state.config.clone(),
            strategy: self.state.strategy,
            train_samples: self.train.len(),
            eval_samples: self.eval.as_ref().map_or(0, Dataset::len),
            records: self.state.records.clone(),
            termination,
        })
    }
}

/// Headless run with a simulated annotator configured from `config`.
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig, strategy: Strategy) -> Result<ExperimentReport> {
    let mut annotator = SimulatedAnnotator::from_config(config, RngStream::new(config.seed).substream("annotate"));
    run_experiment_with(dataset, config, strategy, &mut annotator)
}

pub fn run_experiment_with(
    dataset: &Dataset,
    config: &ExperimentConfig,
    strategy: Strategy,
    annotator: &mut dyn Annotator,
) -> Result<ExperimentReport> {
    Experiment::new(dataset, config.clone(), strategy)?.run(annotator)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub strategy: Strategy,
    pub seed: u64,
    pub report: ExperimentReport,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Aggregate of one strategy's runs at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub strategy: Strategy,
    pub iteration: usize,
    pub runs: usize,
    pub labeled_fraction: MeanStd,
    pub rank1: Option<MeanStd>,
    pub rank5: Option<MeanStd>,
    pub rank10: Option<MeanStd>,
    pub map: Option<MeanStd>,
    pub comparisons: MeanStd,
    pub naive_comparisons: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub runs: Vec<RunEntry>,
    pub rows: Vec<CurveRow>,
}

impl ComparisonTable {
    /// Aggregates runs per (strategy, iteration). Iterations past a run's
    /// termination are not counted for that run.
    pub fn aggregate(runs: Vec<RunEntry>) -> Self {
        let mut groups: BTreeMap<(Strategy, usize), Vec<&IterationRecord>> = BTreeMap::new();
        for run in &runs {
            for r in &run.report.records {
                groups.entry((run.strategy, r.iteration)).or_default().push(r);
            }
        }
        let rows = groups
            .into_iter()
            .map(|((strategy, iteration), recs)| {
                let stat = |f: &dyn Fn(&IterationRecord) -> f64| MeanStd::of(&recs.iter().map(|r| f(r)).collect::<Vec<_>>());
                let metric = |f: fn(&RetrievalMetrics) -> f64| {
                    let v: Option<Vec<f64>> = recs.iter().map(|r| r.metrics.as_ref().map(f)).collect();
                    v.map(|v| MeanStd::of(&v))
                };
                CurveRow {
                    strategy,
                    iteration,
                    runs: recs.len(),
                    labeled_fraction: stat(&|r| r.labeled_fraction),
                    rank1: metric(|m| m.rank1),
                    rank5: metric(|m| m.rank5),
                    rank10: metric(|m| m.rank10),
                    map: metric(|m| m.map),
                    comparisons: stat(&|r| r.ledger.comparisons as f64),
                    naive_comparisons: stat(&|r| r.ledger.naive_comparisons_baseline as f64),
                }
            })
            .collect();
        ComparisonTable { runs, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,iteration,runs,labeled_fraction_mean,rank1_mean,rank1_std,map_mean,map_std,comparisons_mean,naive_comparisons_mean\n",
        );
        for r in &self.rows {
            let ms = |m: Option<MeanStd>| m.map(|m| (m.mean.to_string(), m.std.to_string())).unwrap_or_default();
            let (r1, r1s) = ms(r.rank1);
            let (mp, mps) = ms(r.map);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.strategy,
                r.iteration,
                r.runs,
                r.labeled_fraction.mean,
                r1,
                r1s,
                mp,
                mps,
                r.comparisons.mean,
                r.naive_comparisons.mean
            );
        }
        out
    }
}

/// Runs every (strategy, seed) pair with the simulated annotator, in
/// parallel, and aggregates learning curves.
pub fn compare_strategies(
    dataset: &Dataset,
    config: &ExperimentConfig,
    strategies: &[Strategy],
    seeds: &[u64],
) -> Result<ComparisonTable> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig("need at least one strategy and one seed".into()));
    }
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = jobs
        .into_par_iter()
        .map(|(strategy, seed)| {
            let cfg = ExperimentConfig {
                seed,
                ..config.clone()
            };
            Ok(RunEntry {
                strategy,
                seed,
                report: run_experiment(dataset, &cfg, strategy)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable::aggregate(runs))
}
