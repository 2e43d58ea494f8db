//! Retrieval metrics: CMC rank-k accuracy and mean average precision.
//!
//! Every evaluation sample is used as a query against all other evaluation
//! samples. When both query and gallery item carry camera ids, gallery items
//! of the same identity from the same camera are dropped from that query's
//! gallery, so only cross-camera matches count. Queries left without any
//! relevant item are excluded and counted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::sample::{Dataset, SampleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: SampleId,
    /// Gallery ids, most similar first.
    pub ranking: Vec<SampleId>,
    /// `relevant[i]` says whether `ranking[i]` shares the query's identity.
    pub relevant: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    NegativeEuclidean,
    Cosine,
}

impl Similarity {
    fn score(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Similarity::NegativeEuclidean => {
                -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Similarity::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub map: f64,
    pub queries: usize,
    pub excluded_queries: usize,
}

impl RetrievalMetrics {
    pub fn get(&self, metric: crate::config::MetricName) -> f64 {
        use crate::config::MetricName::*;
        match metric {
            Rank1 => self.rank1,
            Rank5 => self.rank5,
            Rank10 => self.rank10,
            Map => self.map,
        }
    }
}

fn first_hit(relevant: &[bool]) -> Option<usize> {
    relevant.iter().position(|&r| r)
}

fn average_precision(relevant: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

fn valid(results: &[RetrievalResult]) -> Result<Vec<&RetrievalResult>> {
    for r in results {
        if r.ranking.len() != r.relevant.len() {
            return Err(Error::LengthMismatch(r.ranking.len(), r.relevant.len()));
        }
    }
    let v: Vec<&RetrievalResult> = results.iter().filter(|r| r.relevant.contains(&true)).collect();
    if v.is_empty() {
        return Err(Error::Empty("set of queries with a relevant gallery item"));
    }
    Ok(v)
}

/// Queries without any relevant gallery item.
pub fn excluded_queries(results: &[RetrievalResult]) -> usize {
    results.iter().filter(|r| !r.relevant.contains(&true)).count()
}

/// Fraction of (non-excluded) queries with a relevant item in the top `k`.
pub fn rank_k_accuracy(results: &[RetrievalResult], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let v = valid(results)?;
    let hits = v
        .iter()
        .filter(|r| first_hit(&r.relevant).is_some_and(|p| p < k))
        .count();
    Ok(hits as f64 / v.len() as f64)
}

pub fn mean_average_precision(results: &[RetrievalResult]) -> Result<f64> {
    let v = valid(results)?;
    Ok(v.iter().map(|r| average_precision(&r.relevant)).sum::<f64>() / v.len() as f64)
}

/// Relevance masks (most similar first) for every query of the split.
fn relevance_masks(embeddings: &[Vec<f64>], split: &Dataset, similarity: Similarity) -> Vec<(usize, Vec<usize>, Vec<bool>)> {
    let samples = split.samples();
    let truths: Vec<&str> = samples.iter().map(|s| s.truth.reveal()).collect();
    (0..samples.len())
        .into_par_iter()
        .map(|q| {
            let mut gallery: Vec<(usize, f64)> = (0..samples.len())
                .filter(|&g| g != q)
                .filter(|&g| {
                    let same_camera = matches!(
                        (samples[q].camera_id, samples[g].camera_id),
                        (Some(a), Some(b)) if a == b
                    );
                    !(same_camera && truths[g] == truths[q])
                })
                .map(|g| (g, similarity.score(&embeddings[q], &embeddings[g])))
                .collect();
            gallery.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then_with(|| samples[a.0].sample_id.cmp(&samples[b.0].sample_id))
            });
            let order: Vec<usize> = gallery.iter().map(|(g, _)| *g).collect();
            let mask = order.iter().map(|&g| truths[g] == truths[q]).collect();
            (q, order, mask)
        })
        .collect()
}

fn embed_split(model: &ModelState, split: &Dataset) -> Result<Vec<Vec<f64>>> {
    split.samples().par_iter().map(|s| model.embed(s)).collect()
}

/// Full retrieval results (ids included) for inspection.
pub fn retrieval_results(model: &ModelState, split: &Dataset, similarity: Similarity) -> Result<Vec<RetrievalResult>> {
    let embeddings = embed_split(model, split)?;
    let samples = split.samples();
    Ok(relevance_masks(&embeddings, split, similarity)
        .into_iter()
        .map(|(q, order, relevant)| RetrievalResult {
            query: samples[q].sample_id.clone(),
            ranking: order.into_iter().map(|g| samples[g].sample_id.clone()).collect(),
            relevant,
        })
        .collect())
}

/// Rank-1/5/10 and mAP of the model's embeddings on a held-out split.
pub fn evaluate_model(model: &ModelState, split: &Dataset, similarity: Similarity) -> Result<RetrievalMetrics> {
    if split.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let embeddings = embed_split(model, split)?;
    let masks: Vec<Vec<bool>> = relevance_masks(&embeddings, split, similarity)
        .into_iter()
        .map(|(_, _, m)| m)
        .filter(|m| m.contains(&true))
        .collect();
    let excluded = split.len() - masks.len();
    if masks.is_empty() {
        return Err(Error::Empty("set of queries with a relevant gallery item"));
    }
    let n = masks.len() as f64;
    let rank = |k: usize| masks.iter().filter(|m| first_hit(m).is_some_and(|p| p < k)).count() as f64 / n;
    Ok(RetrievalMetrics {
        rank1: rank(1),
        rank5: rank(5),
        rank10: rank(10),
        map: masks.iter().map(|m| average_precision(m)).sum::<f64>() / n,
        queries: masks.len(),
        excluded_queries: excluded,
    })
}
