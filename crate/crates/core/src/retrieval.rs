//! Brute-force k-NN over a corpus of full-dimension embeddings and the
//! shortlist-then-rerank funnel built on it.
//!
//! Scores are oriented so larger is better (distances are negated), computed in
//! `f64`, and ties are broken by ascending document id.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::embedding::{check_prefix, dot_f32, norm_f32, MIN_NORM};
use crate::{EmbeddingVector, Error, Result, SimilarityMetric};

/// Immutable set of document embeddings, row-major `N × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    fingerprint: [u8; 16],
}

impl Corpus {
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        data: Vec<f32>,
        fingerprint: [u8; 16],
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::config("corpus dimension must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::LengthMismatch {
                left: ids.len() * dim,
                right: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut sorted: Vec<&String> = ids.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(alloc::format!(
                "duplicate document id {:?}",
                w[0]
            )));
        }
        Ok(Self {
            ids,
            dim,
            data,
            fingerprint,
        })
    }

    /// Builds a corpus from `(id, embedding)` rows of equal dimension.
    pub fn from_rows(rows: Vec<(String, EmbeddingVector)>, fingerprint: [u8; 16]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|(_, v)| v.dim())
            .ok_or(Error::EmptyDataset)?;
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            ids.push(id);
            data.extend_from_slice(&v);
        }
        Self::new(ids, dim, data, fingerprint)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn fingerprint(&self) -> [u8; 16] {
        self.fingerprint
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub id: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Best first.
    pub hits: Vec<Hit>,
    pub metric: SimilarityMetric,
    pub dim: usize,
    /// Set when fewer than the requested `k` documents were available.
    pub truncated: bool,
}

impl SearchResult {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunnelConfig {
    pub shortlist_dim: usize,
    pub shortlist_size: usize,
    pub final_dim: usize,
    pub k: usize,
}

impl FunnelConfig {
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.shortlist_dim == 0
            || self.shortlist_dim > self.final_dim
            || self.final_dim > corpus.dim()
        {
            return Err(Error::config(
                "funnel needs 1 <= shortlist_dim <= final_dim <= d",
            ));
        }
        if self.shortlist_size < self.k {
            return Err(Error::config("shortlist size must be at least k"));
        }
        Ok(())
    }
}

/// Query prefix with the data needed to score it.
struct Query<'a> {
    values: &'a [f32],
    norm: f64,
}

fn prepare<'a>(
    query: &'a EmbeddingVector,
    corpus: &Corpus,
    m: usize,
    metric: SimilarityMetric,
) -> Result<Query<'a>> {
    if query.dim() != corpus.dim() && query.dim() < m {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            actual: query.dim(),
        });
    }
    check_prefix(m, corpus.dim())?;
    check_prefix(m, query.dim())?;
    let values = &query.as_slice()[..m];
    let norm = norm_f32(values);
    if metric == SimilarityMetric::Cosine && norm < MIN_NORM {
        return Err(Error::zero_vector().with_context("query"));
    }
    Ok(Query { values, norm })
}

fn score_doc(q: &Query<'_>, doc: &[f32], metric: SimilarityMetric) -> Result<f64> {
    match metric {
        SimilarityMetric::Cosine => {
            let dn = norm_f32(doc);
            if dn < MIN_NORM {
                return Err(Error::zero_vector());
            }
            Ok(dot_f32(q.values, doc) / (q.norm * dn))
        }
        other => other.score(q.values, doc),
    }
}

fn rank_order(ids: &[String]) -> impl Fn(&(usize, f64), &(usize, f64)) -> Ordering + '_ {
    move |a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0]))
}

/// Scores `candidates` at prefix `m` and keeps the best `k` (index, score) pairs.
fn top_k(
    query: &Query<'_>,
    corpus: &Corpus,
    candidates: impl Iterator<Item = usize>,
    m: usize,
    metric: SimilarityMetric,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut scored = candidates
        .map(|i| {
            score_doc(query, &corpus.row(i)[..m], metric)
                .map(|s| (i, s))
                .map_err(|e| e.with_context(alloc::format!("document {:?}", corpus.ids[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    let order = rank_order(&corpus.ids);
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, &order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(&order);
    Ok(scored)
}

fn to_result(
    corpus: &Corpus,
    ranked: Vec<(usize, f64)>,
    metric: SimilarityMetric,
    dim: usize,
    truncated: bool,
) -> SearchResult {
    SearchResult {
        hits: ranked
            .into_iter()
            .map(|(i, s)| Hit {
                id: corpus.ids[i].clone(),
                score: s as f32,
            })
            .collect(),
        metric,
        dim,
        truncated,
    }
}

/// Exact top-`k` over the whole corpus using the first `m` coordinates.
/// `k > N` returns all documents with `truncated` set.
pub fn exact_knn(
    query: &EmbeddingVector,
    corpus: &Corpus,
    m: usize,
    metric: SimilarityMetric,
    k: usize,
) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let q = prepare(query, corpus, m, metric)?;
    let ranked = top_k(&q, corpus, 0..corpus.len(), m, metric, k)?;
    Ok(to_result(corpus, ranked, metric, m, k > corpus.len()))
}

/// Shortlist `S` documents at `shortlist_dim`, then rerank them at `final_dim`.
pub fn funnel_search(
    query: &EmbeddingVector,
    corpus: &Corpus,
    config: &FunnelConfig,
    metric: SimilarityMetric,
) -> Result<SearchResult> {
    let (shortlist, result) = funnel_search_with_shortlist(query, corpus, config, metric)?;
    drop(shortlist);
    Ok(result)
}

/// [`funnel_search`] that also returns the stage-one candidate ids.
pub fn funnel_search_with_shortlist(
    query: &EmbeddingVector,
    corpus: &Corpus,
    config: &FunnelConfig,
    metric: SimilarityMetric,
) -> Result<(Vec<String>, SearchResult)> {
    config.validate(corpus)?;
    let coarse = prepare(query, corpus, config.shortlist_dim, metric)?;
    let shortlist = top_k(
        &coarse,
        corpus,
        0..corpus.len(),
        config.shortlist_dim,
        metric,
        config.shortlist_size,
    )?;
    let fine = prepare(query, corpus, config.final_dim, metric)?;
    let ranked = top_k(
        &fine,
        corpus,
        shortlist.iter().map(|&(i, _)| i),
        config.final_dim,
        metric,
        config.k,
    )?;
    let ids = shortlist
        .iter()
        .map(|&(i, _)| corpus.ids[i].clone())
        .collect();
    let truncated = config.k > corpus.len();
    Ok((
        ids,
        to_result(corpus, ranked, metric, config.final_dim, truncated),
    ))
}

/// `|top-k(result) ∩ top-k(exact)| / k`.
pub fn recall_at_k(result: &SearchResult, exact: &SearchResult, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    for r in [result, exact] {
        if r.hits.len() < k {
            return Err(Error::Size {
                required: k,
                available: r.hits.len(),
            });
        }
    }
    let mut truth: Vec<&str> = exact.ids().take(k).collect();
    truth.sort_unstable();
    let found = result
        .ids()
        .take(k)
        .filter(|id| truth.binary_search(id).is_ok())
        .count();
    Ok(found as f64 / k as f64)
}
