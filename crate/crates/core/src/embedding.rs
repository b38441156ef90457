//! Embedding vectors, prefix truncation, similarity kernels and dimension ladders.
//!
//! Vectors are stored as `f32`; every kernel accumulates in `f64`.

use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;
use core::str::FromStr;

use crate::{Error, Result};

/// Norms below this are treated as zero.
pub const MIN_NORM: f64 = 1e-12;

/// A dense, finite, non-empty `f32` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionOutOfRange {
                requested: 0,
                available: 0,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub(crate) fn from_finite(values: Vec<f32>) -> Self {
        debug_assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    /// The first `m` coordinates.
    pub fn truncate(&self, m: usize) -> Result<EmbeddingVector> {
        check_prefix(m, self.dim())?;
        Ok(Self(self.0[..m].to_vec()))
    }

    pub fn norm(&self) -> f64 {
        norm_f32(&self.0)
    }

    pub fn l2_normalize(&self) -> Result<EmbeddingVector> {
        let n = self.norm();
        if n < MIN_NORM {
            return Err(Error::zero_vector());
        }
        Ok(Self(
            self.0.iter().map(|&v| (f64::from(v) / n) as f32).collect(),
        ))
    }
}

impl Deref for EmbeddingVector {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::new(values)
    }
}

pub(crate) fn check_prefix(m: usize, dim: usize) -> Result<()> {
    if m == 0 || m > dim {
        return Err(Error::DimensionOutOfRange {
            requested: m,
            available: dim,
        });
    }
    Ok(())
}

pub fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

pub fn norm_f32(a: &[f32]) -> f64 {
    libm::sqrt(dot_f32(a, a))
}

/// The four similarity functions used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimilarityMetric {
    Cosine,
    Manhattan,
    Euclidean,
    Dot,
}

impl SimilarityMetric {
    /// Report column order.
    pub const ALL: [SimilarityMetric; 4] = [
        SimilarityMetric::Cosine,
        SimilarityMetric::Manhattan,
        SimilarityMetric::Euclidean,
        SimilarityMetric::Dot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityMetric::Cosine => "cosine",
            SimilarityMetric::Manhattan => "manhattan",
            SimilarityMetric::Euclidean => "euclidean",
            SimilarityMetric::Dot => "dot",
        }
    }

    /// Whether [`similarity`] returns a distance (smaller is closer).
    pub fn is_distance(self) -> bool {
        matches!(
            self,
            SimilarityMetric::Euclidean | SimilarityMetric::Manhattan
        )
    }

    /// Raw metric value over two equal-length slices. No dimension check.
    pub fn raw(self, u: &[f32], v: &[f32]) -> Result<f64> {
        Ok(match self {
            SimilarityMetric::Cosine => {
                let (nu, nv) = (norm_f32(u), norm_f32(v));
                if nu < MIN_NORM || nv < MIN_NORM {
                    return Err(Error::zero_vector());
                }
                (dot_f32(u, v) / (nu * nv)).clamp(-1.0, 1.0)
            }
            SimilarityMetric::Dot => dot_f32(u, v),
            SimilarityMetric::Euclidean => libm::sqrt(
                u.iter()
                    .zip(v)
                    .map(|(&a, &b)| {
                        let d = f64::from(a) - f64::from(b);
                        d * d
                    })
                    .sum(),
            ),
            SimilarityMetric::Manhattan => u
                .iter()
                .zip(v)
                .map(|(&a, &b)| libm::fabs(f64::from(a) - f64::from(b)))
                .sum(),
        })
    }

    /// Metric value oriented so that larger means more similar: distances are negated.
    pub fn score(self, u: &[f32], v: &[f32]) -> Result<f64> {
        let raw = self.raw(u, v)?;
        Ok(if self.is_distance() { -raw } else { raw })
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimilarityMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(alloc::format!("unknown metric {s:?}")))
    }
}

/// Raw similarity (cosine, dot) or distance (euclidean, manhattan) between `u` and `v`.
pub fn similarity(
    u: &EmbeddingVector,
    v: &EmbeddingVector,
    metric: SimilarityMetric,
) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    metric.raw(u, v)
}

/// Strictly descending list of truncation dimensions; the first entry is the
/// full dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimensionLadder(Vec<usize>);

impl DimensionLadder {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::config("dimension ladder is empty"));
        }
        if dims.contains(&0) {
            return Err(Error::config("dimension ladder entries must be positive"));
        }
        if dims.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config(
                "dimension ladder must be strictly descending",
            ));
        }
        Ok(Self(dims))
    }

    /// `[d, d/2, d/4, ...]`, stopping before an entry would fall below `floor`.
    pub fn halving(d: usize, floor: usize) -> Result<Self> {
        if floor == 0 || floor > d {
            return Err(Error::config("halving ladder needs 1 <= floor <= d"));
        }
        let mut dims = Vec::new();
        let mut m = d;
        while m >= floor && m > 0 {
            dims.push(m);
            m /= 2;
        }
        Self::new(dims)
    }

    /// `[768, 512, 256, 128, 64]`, sized for 768-dim transformer encoders.
    pub fn wide_default() -> Self {
        Self(alloc::vec![768, 512, 256, 128, 64])
    }

    /// The desk-scale ladder `[256, 128, 64, 32]`.
    pub fn desk_default() -> Self {
        Self(alloc::vec![256, 128, 64, 32])
    }

    pub fn full_dim(&self) -> usize {
        self.0[0]
    }

    pub fn min_dim(&self) -> usize {
        *self.0.last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: usize) -> bool {
        self.0.contains(&m)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for DimensionLadder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for DimensionLadder {
    type Err = Error;

    /// Parses a comma-separated list such as `256,128,64,32`.
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::config(alloc::format!("bad ladder entry {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }
}
