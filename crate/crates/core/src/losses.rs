//! Training objectives with analytic gradients.
//!
//! - [`softmax_ce`]: numerically stable softmax cross-entropy
//! - [`mrl_loss`]: weighted sum of cross-entropies of per-dimension linear
//!   classifiers applied to prefixes of one embedding
//! - [`mrl_e_loss`]: the same with one shared classifier whose first `m` columns
//!   serve dimension `m`
//! - [`mnrl`]: in-batch negatives ranking loss over scaled cosine scores
//! - [`matryoshka_wrap`]: [`mnrl`] applied at every ladder dimension on truncated
//!   inputs and summed with per-dimension weights
//!
//! All math is `f64`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::embedding::{check_prefix, MIN_NORM};
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::{DimensionLadder, Error, Result};

/// Default scale applied to cosine scores in [`mnrl`].
pub const DEFAULT_SCALE: f64 = 20.0;

/// A loss value together with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<G> {
    pub value: f64,
    pub gradients: G,
}

/// `-log softmax(logits)[target]` and its gradient `softmax(logits) - onehot(target)`.
///
/// A single logit is accepted (value 0, zero gradient); it is the degenerate
/// one-candidate case of [`mnrl`].
pub fn softmax_ce(logits: &[f64], target: usize) -> Result<LossResult<Vec<f64>>> {
    if target >= logits.len() {
        return Err(Error::Label {
            label: target,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let sum: f64 = probs.iter().sum();
    let log_sum = libm::log(sum);
    let value = log_sum - (logits[target] - max);
    probs.iter_mut().for_each(|p| *p /= sum);
    probs[target] -= 1.0;
    Ok(LossResult {
        value,
        gradients: probs,
    })
}

/// Per-dimension weights `c_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights(BTreeMap<usize, f64>);

impl LossWeights {
    /// Weight 1.0 for every ladder entry.
    pub fn uniform(ladder: &DimensionLadder) -> Self {
        Self(ladder.iter().map(|m| (m, 1.0)).collect())
    }

    pub fn new(weights: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let map: BTreeMap<usize, f64> = weights.into_iter().collect();
        if map.values().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::config(
                "loss weights must be finite and non-negative",
            ));
        }
        Ok(Self(map))
    }

    pub fn get(&self, m: usize) -> Result<f64> {
        self.0
            .get(&m)
            .copied()
            .ok_or_else(|| Error::config(alloc::format!("no loss weight for dimension {m}")))
    }

    pub fn set(&mut self, m: usize, c: f64) {
        self.0.insert(m, c);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().map(|(&m, &c)| (m, c))
    }

    /// Checks that every ladder entry has a weight.
    pub fn covers(&self, ladder: &DimensionLadder) -> Result<()> {
        ladder.iter().try_for_each(|m| self.get(m).map(|_| ()))
    }
}

/// A post-encoder embedding with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub embedding: Vec<f64>,
    pub label: usize,
}

/// Linear classifiers for every ladder dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierStack {
    /// One `classes × m` matrix per ladder dimension `m`.
    Independent(Vec<Matrix>),
    /// One `classes × d` matrix; dimension `m` uses its first `m` columns.
    Tied(Matrix),
}

impl ClassifierStack {
    pub fn independent_random<R: Rng + ?Sized>(
        ladder: &DimensionLadder,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        ClassifierStack::Independent(
            ladder
                .iter()
                .map(|m| Matrix::random_uniform(classes, m, 1.0 / libm::sqrt(m as f64), rng))
                .collect(),
        )
    }

    pub fn tied_random<R: Rng + ?Sized>(full_dim: usize, classes: usize, rng: &mut R) -> Self {
        ClassifierStack::Tied(Matrix::random_uniform(
            classes,
            full_dim,
            1.0 / libm::sqrt(full_dim as f64),
            rng,
        ))
    }

    pub fn classes(&self) -> usize {
        match self {
            ClassifierStack::Independent(ms) => ms.first().map_or(0, Matrix::rows),
            ClassifierStack::Tied(w) => w.rows(),
        }
    }

    pub fn full_dim(&self) -> usize {
        match self {
            ClassifierStack::Independent(ms) => ms.iter().map(Matrix::cols).max().unwrap_or(0),
            ClassifierStack::Tied(w) => w.cols(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            ClassifierStack::Independent(ms) => ms.iter().map(|m| m.rows() * m.cols()).sum(),
            ClassifierStack::Tied(w) => w.rows() * w.cols(),
        }
    }

    /// A zero-filled stack of the same shape.
    pub fn zeros_like(&self) -> Self {
        match self {
            ClassifierStack::Independent(ms) => ClassifierStack::Independent(
                ms.iter()
                    .map(|m| Matrix::zeros(m.rows(), m.cols()))
                    .collect(),
            ),
            ClassifierStack::Tied(w) => ClassifierStack::Tied(Matrix::zeros(w.rows(), w.cols())),
        }
    }

    fn matrix_index(&self, m: usize) -> Result<usize> {
        match self {
            ClassifierStack::Independent(ms) => ms
                .iter()
                .position(|w| w.cols() == m)
                .ok_or_else(|| Error::config(alloc::format!("no classifier for dimension {m}"))),
            ClassifierStack::Tied(w) => {
                check_prefix(m, w.cols())?;
                Ok(0)
            }
        }
    }

    fn matrix(&self, idx: usize) -> &Matrix {
        match self {
            ClassifierStack::Independent(ms) => &ms[idx],
            ClassifierStack::Tied(w) => w,
        }
    }

    fn matrix_mut(&mut self, idx: usize) -> &mut Matrix {
        match self {
            ClassifierStack::Independent(ms) => &mut ms[idx],
            ClassifierStack::Tied(w) => w,
        }
    }

    pub fn matrices(&self) -> &[Matrix] {
        match self {
            ClassifierStack::Independent(ms) => ms,
            ClassifierStack::Tied(w) => core::slice::from_ref(w),
        }
    }

    pub fn matrices_mut(&mut self) -> &mut [Matrix] {
        match self {
            ClassifierStack::Independent(ms) => ms,
            ClassifierStack::Tied(w) => core::slice::from_mut(w),
        }
    }
}

/// Gradients of [`mrl_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct MrlGradients {
    /// Same shape as the classifier stack that was evaluated.
    pub classifiers: ClassifierStack,
    /// Gradient with respect to the full embedding `z`.
    pub embedding: Vec<f64>,
}

/// `Σ_m c_m · CE(W⁽ᵐ⁾ z[..m], y)` over the ladder.
pub fn mrl_loss(
    example: &LabeledExample,
    stack: &ClassifierStack,
    weights: &LossWeights,
    ladder: &DimensionLadder,
) -> Result<LossResult<MrlGradients>> {
    let z = &example.embedding;
    let d = ladder.full_dim();
    if z.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: z.len(),
        });
    }
    if stack.full_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: stack.full_dim(),
        });
    }
    let classes = stack.classes();
    if example.label >= classes {
        return Err(Error::Label {
            label: example.label,
            classes,
        });
    }

    let mut value = 0.0;
    let mut grad_stack = stack.zeros_like();
    let mut grad_z = vec![0.0; d];
    for m in ladder.iter() {
        let c = weights.get(m)?;
        let idx = stack.matrix_index(m)?;
        let w = stack.matrix(idx);
        let logits = w.mul_vec_prefix(z, m);
        let ce = softmax_ce(&logits, example.label)?;
        value += c * ce.value;

        // dL/dW[r, j] = c · g_r · z_j ; dL/dz_j = c · Σ_r g_r · W[r, j]   (j < m)
        let gw = grad_stack.matrix_mut(idx);
        for (r, &g) in ce.gradients.iter().enumerate() {
            let cg = c * g;
            axpy(cg, &z[..m], &mut gw.row_mut(r)[..m]);
            axpy(cg, &w.row(r)[..m], &mut grad_z[..m]);
        }
    }
    Ok(LossResult {
        value,
        gradients: MrlGradients {
            classifiers: grad_stack,
            embedding: grad_z,
        },
    })
}

/// [`mrl_loss`] with a single shared `classes × d` classifier.
pub fn mrl_e_loss(
    example: &LabeledExample,
    shared: &Matrix,
    weights: &LossWeights,
    ladder: &DimensionLadder,
) -> Result<LossResult<MrlGradients>> {
    // The stack is a thin wrapper; cloning keeps the public signature borrow-only.
    mrl_loss(
        example,
        &ClassifierStack::Tied(shared.clone()),
        weights,
        ladder,
    )
}

/// Anchors, positives and negatives, one vector per row.
///
/// `negatives` may be empty, in which case only the positives are candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl TripletBatch {
    pub fn new(
        anchors: Vec<Vec<f64>>,
        positives: Vec<Vec<f64>>,
        negatives: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let batch = Self {
            anchors,
            positives,
            negatives,
        };
        batch.dim()?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Validates shapes and returns the common dimension.
    pub fn dim(&self) -> Result<usize> {
        let b = self.anchors.len();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.positives.len() != b {
            return Err(Error::LengthMismatch {
                left: b,
                right: self.positives.len(),
            });
        }
        if !self.negatives.is_empty() && self.negatives.len() != b {
            return Err(Error::LengthMismatch {
                left: b,
                right: self.negatives.len(),
            });
        }
        let d = self.anchors[0].len();
        for v in self
            .anchors
            .iter()
            .chain(&self.positives)
            .chain(&self.negatives)
        {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: v.len(),
                });
            }
        }
        Ok(d)
    }

    /// Every vector cut to its first `m` coordinates.
    pub fn truncated(&self, m: usize) -> Result<TripletBatch> {
        check_prefix(m, self.dim()?)?;
        let cut = |vs: &[Vec<f64>]| vs.iter().map(|v| v[..m].to_vec()).collect();
        Ok(TripletBatch {
            anchors: cut(&self.anchors),
            positives: cut(&self.positives),
            negatives: cut(&self.negatives),
        })
    }
}

/// Gradients with respect to every vector of a [`TripletBatch`].
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGradients {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl TripletGradients {
    fn zeros(b: usize, with_negatives: bool, d: usize) -> Self {
        Self {
            anchors: vec![vec![0.0; d]; b],
            positives: vec![vec![0.0; d]; b],
            negatives: if with_negatives {
                vec![vec![0.0; d]; b]
            } else {
                Vec::new()
            },
        }
    }
}

fn unit_and_norm(v: &[f64], context: &str, i: usize) -> Result<(Vec<f64>, f64)> {
    let n = norm(v);
    if n < MIN_NORM {
        return Err(Error::zero_vector().with_context(alloc::format!("{context} {i}")));
    }
    Ok((v.iter().map(|x| x / n).collect(), n))
}

/// In-batch negatives ranking loss.
///
/// For anchor `i` the candidates are all positives followed by all negatives
/// of the batch; the target is positive `i`. Scores are `scale · cos`. The
/// value is the mean cross-entropy over anchors.
pub fn mnrl(batch: &TripletBatch, scale: f64) -> Result<LossResult<TripletGradients>> {
    let d = batch.dim()?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::config("scale must be positive and finite"));
    }
    let b = batch.len();

    let units = |vs: &[Vec<f64>], what: &str| -> Result<Vec<(Vec<f64>, f64)>> {
        vs.iter()
            .enumerate()
            .map(|(i, v)| unit_and_norm(v, what, i))
            .collect()
    };
    let anchors = units(&batch.anchors, "anchor")?;
    let candidates: Vec<(Vec<f64>, f64)> = units(&batch.positives, "positive")?
        .into_iter()
        .chain(units(&batch.negatives, "negative")?)
        .collect();
    let n_cand = candidates.len();

    let mut grads = TripletGradients::zeros(b, !batch.negatives.is_empty(), d);
    let mut cand_grads = vec![vec![0.0; d]; n_cand];
    let mut value = 0.0;
    let inv_b = 1.0 / b as f64;
    for (i, (a_hat, a_norm)) in anchors.iter().enumerate() {
        let cosines: Vec<f64> = candidates
            .iter()
            .map(|(c_hat, _)| dot(a_hat, c_hat))
            .collect();
        let logits: Vec<f64> = cosines.iter().map(|c| scale * c).collect();
        let ce = softmax_ce(&logits, i)?;
        value += ce.value * inv_b;

        // d cos(a, c) / da = (ĉ - cos · â) / |a|, symmetric for c.
        let grad_a = &mut grads.anchors[i];
        for (j, (c_hat, c_norm)) in candidates.iter().enumerate() {
            let g = ce.gradients[j] * scale * inv_b;
            if g == 0.0 {
                continue;
            }
            let cos = cosines[j];
            axpy(g / a_norm, c_hat, grad_a);
            axpy(-g * cos / a_norm, a_hat, grad_a);
            axpy(g / c_norm, a_hat, &mut cand_grads[j]);
            axpy(-g * cos / c_norm, c_hat, &mut cand_grads[j]);
        }
    }
    let mut cand_iter = cand_grads.into_iter();
    for slot in grads.positives.iter_mut().chain(grads.negatives.iter_mut()) {
        *slot = cand_iter.next().unwrap();
    }
    Ok(LossResult {
        value,
        gradients: grads,
    })
}

/// `Σ_m c_m · mnrl(batch[..m], scale)` over the ladder, with gradients on the
/// full-dimensional inputs. Terms with `c_m = 0` are skipped.
pub fn matryoshka_wrap(
    batch: &TripletBatch,
    ladder: &DimensionLadder,
    weights: &LossWeights,
    scale: f64,
) -> Result<LossResult<TripletGradients>> {
    let d = batch.dim()?;
    if d != ladder.full_dim() {
        return Err(Error::DimensionMismatch {
            expected: ladder.full_dim(),
            actual: d,
        });
    }
    weights.covers(ladder)?;
    let mut value = 0.0;
    let mut grads = TripletGradients::zeros(batch.len(), !batch.negatives.is_empty(), d);
    for m in ladder.iter() {
        let c = weights.get(m)?;
        if c == 0.0 {
            continue;
        }
        let term = if m == d {
            mnrl(batch, scale)?
        } else {
            mnrl(&batch.truncated(m)?, scale)?
        };
        value += c * term.value;
        let pairs = grads
            .anchors
            .iter_mut()
            .zip(&term.gradients.anchors)
            .chain(grads.positives.iter_mut().zip(&term.gradients.positives))
            .chain(grads.negatives.iter_mut().zip(&term.gradients.negatives));
        for (full, part) in pairs {
            axpy(c, part, &mut full[..m]);
        }
    }
    Ok(LossResult {
        value,
        gradients: grads,
    })
}
