//! Embedding-similarity evaluation: predicted similarity series per dimension
//! and metric, correlated against gold scores with Pearson and Spearman, plus
//! the per-dimension max over metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::ScoredPair;
use crate::{DimensionLadder, EmbeddingVector, Error, Result, SimilarityMetric};

/// Anything that produces prefix-truncatable embeddings.
pub trait Embedder {
    fn ladder(&self) -> &DimensionLadder;
    fn embed(&self, text: &str, m: usize) -> Result<EmbeddingVector>;
}

fn check_series(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two points"));
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_series(xs, ys)?;
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson over average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_series(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Per-pair similarity at dimension `m`; distances are negated so that larger
/// always means more similar.
pub fn similarity_series<E: Embedder + ?Sized>(
    model: &E,
    pairs: &[ScoredPair],
    m: usize,
    metric: SimilarityMetric,
) -> Result<Vec<f64>> {
    check_ladder_dim(model.ladder(), m)?;
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a = model.embed(&p.sentence1, m)?;
            let b = model.embed(&p.sentence2, m)?;
            metric
                .score(&a, &b)
                .map_err(|e| e.with_context(alloc::format!("pair {i}")))
        })
        .collect()
}

fn check_ladder_dim(ladder: &DimensionLadder, m: usize) -> Result<()> {
    if ladder.contains(m) {
        Ok(())
    } else {
        Err(Error::config(alloc::format!(
            "dimension {m} is not in the ladder {ladder}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
}

/// One row of a correlation report.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionRow {
    pub dim: usize,
    /// In evaluation order (normally [`SimilarityMetric::ALL`]).
    pub metrics: Vec<(SimilarityMetric, Correlation)>,
    pub pearson_max: f64,
    pub spearman_max: f64,
}

impl DimensionRow {
    /// Builds a row, computing the max aggregations.
    pub fn new(dim: usize, metrics: Vec<(SimilarityMetric, Correlation)>) -> Result<Self> {
        let pearson_max = aggregate_max(metrics.iter().map(|(_, c)| c.pearson))?;
        let spearman_max = aggregate_max(metrics.iter().map(|(_, c)| c.spearman))?;
        Ok(Self {
            dim,
            metrics,
            pearson_max,
            spearman_max,
        })
    }

    pub fn get(&self, metric: SimilarityMetric) -> Option<Correlation> {
        self.metrics
            .iter()
            .find(|(m, _)| *m == metric)
            .map(|(_, c)| *c)
    }
}

/// Element-wise maximum across metrics.
pub fn aggregate_max(values: impl IntoIterator<Item = f64>) -> Result<f64> {
    values
        .into_iter()
        .reduce(f64::max)
        .ok_or(Error::UndefinedCorrelation("no metrics to aggregate"))
}

/// Dimension × metric × {pearson, spearman} grid with max aggregations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub rows: Vec<DimensionRow>,
}

impl CorrelationReport {
    pub fn row(&self, dim: usize) -> Option<&DimensionRow> {
        self.rows.iter().find(|r| r.dim == dim)
    }
}

/// Evaluates every ladder dimension under all four metrics.
pub fn evaluate<E: Embedder + ?Sized>(
    model: &E,
    pairs: &[ScoredPair],
    ladder: &DimensionLadder,
) -> Result<CorrelationReport> {
    evaluate_metrics(model, pairs, ladder, &SimilarityMetric::ALL)
}

pub fn evaluate_metrics<E: Embedder + ?Sized>(
    model: &E,
    pairs: &[ScoredPair],
    ladder: &DimensionLadder,
    metrics: &[SimilarityMetric],
) -> Result<CorrelationReport> {
    if pairs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two pairs"));
    }
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let rows = ladder
        .iter()
        .map(|m| {
            check_ladder_dim(model.ladder(), m)?;
            // Encode each sentence once per dimension, then score under every metric.
            let embedded = pairs
                .iter()
                .map(|p| Ok((model.embed(&p.sentence1, m)?, model.embed(&p.sentence2, m)?)))
                .collect::<Result<Vec<_>>>()?;
            let cells = metrics
                .iter()
                .map(|&metric| {
                    let series = embedded
                        .iter()
                        .enumerate()
                        .map(|(i, (a, b))| {
                            metric
                                .score(a, b)
                                .map_err(|e| e.with_context(alloc::format!("pair {i}")))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((
                        metric,
                        Correlation {
                            pearson: pearson(&series, &gold)?,
                            spearman: spearman(&series, &gold)?,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            DimensionRow::new(m, cells)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationReport { rows })
}
