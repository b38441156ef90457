//! Linear hashed-feature text encoder and its training loop.
//!
//! An [`EncoderModel`] maps text to `W · features(text)`, where `features` is the
//! hashed n-gram bag from [`crate::textnorm`] and `W` is a `d × F` matrix stored
//! row-major as `f32`. Row `r` of `W` produces coordinate `r`, so encoding at
//! dimension `m` only touches the first `m` rows and is bit-identical to the
//! prefix of the full encoding.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::TripletRow;
use crate::embedding::check_prefix;
use crate::evaluator::Embedder;
use crate::losses::{self, LossWeights, TripletBatch};
use crate::textnorm::DEFAULT_MAX_CHARS;
use crate::{
    DimensionLadder, EmbeddingVector, Error, FeatureVector, FeaturizerConfig, Result,
    SimilarityMetric,
};

/// Current model format version.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    weights: Vec<f32>,
    dim: usize,
    featurizer: FeaturizerConfig,
    ladder: DimensionLadder,
    seed: u64,
    version: u32,
}

impl EncoderModel {
    /// Fresh model with weights i.i.d. uniform in `[-1/√F, 1/√F]`.
    pub fn init(ladder: DimensionLadder, featurizer: FeaturizerConfig, seed: u64) -> Result<Self> {
        featurizer.validate()?;
        let f = featurizer.feature_space();
        let dim = ladder.full_dim();
        let bound = (1.0 / libm::sqrt(f as f64)) as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..dim * f)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Ok(Self {
            weights,
            dim,
            featurizer,
            ladder,
            seed,
            version: FORMAT_VERSION,
        })
    }

    /// Assembles a model from stored parts, validating shapes and finiteness.
    pub fn from_parts(
        ladder: DimensionLadder,
        featurizer: FeaturizerConfig,
        seed: u64,
        weights: Vec<f32>,
    ) -> Result<Self> {
        featurizer.validate()?;
        let dim = ladder.full_dim();
        let expected = dim * featurizer.feature_space();
        if weights.len() != expected {
            return Err(Error::LengthMismatch {
                left: expected,
                right: weights.len(),
            });
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            weights,
            dim,
            featurizer,
            ladder,
            seed,
            version: FORMAT_VERSION,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_space(&self) -> usize {
        self.featurizer.feature_space()
    }

    pub fn featurizer(&self) -> FeaturizerConfig {
        self.featurizer
    }

    pub fn ladder(&self) -> &DimensionLadder {
        &self.ladder
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Row-major `d × F` weights.
    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn features(&self, text: &str) -> FeatureVector {
        self.features_capped(text, DEFAULT_MAX_CHARS)
    }

    fn features_capped(&self, text: &str, max_chars: usize) -> FeatureVector {
        self.featurizer
            .featurize(text, max_chars)
            .expect("featurizer validated at construction")
    }

    /// `W[..m, :] · features`, accumulated in `f64` per row.
    pub fn encode_features(&self, features: &FeatureVector, m: usize) -> Result<EmbeddingVector> {
        check_prefix(m, self.dim)?;
        let f = self.feature_space();
        let values = (0..m)
            .map(|r| {
                let row = &self.weights[r * f..(r + 1) * f];
                features
                    .iter()
                    .map(|(j, c)| f64::from(row[j as usize]) * f64::from(c))
                    .sum::<f64>() as f32
            })
            .collect();
        Ok(EmbeddingVector::from_finite(values))
    }

    /// Embedding of `text` truncated to its first `m` coordinates.
    pub fn encode(&self, text: &str, m: usize) -> Result<EmbeddingVector> {
        check_prefix(m, self.dim)?;
        self.encode_features(&self.features(text), m)
    }

    /// Full-dimension embedding without the final `f32` rounding.
    fn embed_f64(&self, features: &FeatureVector) -> Vec<f64> {
        let f = self.feature_space();
        (0..self.dim)
            .map(|r| {
                let row = &self.weights[r * f..(r + 1) * f];
                features
                    .iter()
                    .map(|(j, c)| f64::from(row[j as usize]) * f64::from(c))
                    .sum()
            })
            .collect()
    }
}

impl Embedder for EncoderModel {
    fn ladder(&self) -> &DimensionLadder {
        &self.ladder
    }

    fn embed(&self, text: &str, m: usize) -> Result<EmbeddingVector> {
        self.encode(text, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub scale: f64,
    /// Training ladder; `None` uses the model's own ladder.
    pub ladder: Option<DimensionLadder>,
    /// Per-dimension weights; `None` means 1.0 everywhere.
    pub loss_weights: Option<LossWeights>,
    /// Input cap in code points.
    pub max_chars: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 1,
            learning_rate: 1e-3,
            scale: losses::DEFAULT_SCALE,
            ladder: None,
            loss_weights: None,
            max_chars: DEFAULT_MAX_CHARS,
            seed: 42,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(
                "learning_rate must be finite and non-negative",
            ));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::config("scale must be positive"));
        }
        if self.max_chars == 0 {
            return Err(Error::config("max_chars must be at least 1"));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
            return Err(Error::config("adam needs 0 <= beta < 1 and eps > 0"));
        }
        Ok(())
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub batch_losses: Vec<f64>,
    pub epoch_mean_losses: Vec<f64>,
    /// `(dimension, accuracy)` on the training triplets, in ladder order.
    pub final_accuracy: Vec<(usize, f64)>,
    /// Wall-clock time, filled in by callers that have a clock.
    pub duration_ms: Option<u64>,
}

struct Adam {
    config: AdamConfig,
    first: Vec<f32>,
    second: Vec<f32>,
    step: i32,
}

impl Adam {
    fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - libm::pow(beta1, f64::from(self.step));
        let bias2 = 1.0 - libm::pow(beta2, f64::from(self.step));
        let step_size = lr / bias1;
        let iter = params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()));
        for ((p, &g), (m, v)) in iter {
            let g = f64::from(g);
            let m_new = beta1 * f64::from(*m) + (1.0 - beta1) * g;
            let v_new = beta2 * f64::from(*v) + (1.0 - beta2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let denom = libm::sqrt(v_new / bias2) + eps;
            *p = (f64::from(*p) - step_size * m_new / denom) as f32;
        }
    }
}

/// Featurized triplet.
struct Encoded {
    anchor: FeatureVector,
    positive: FeatureVector,
    negative: FeatureVector,
}

/// Stepwise trainer: owns the model being trained and the optimizer state.
pub struct Trainer {
    model: EncoderModel,
    config: TrainConfig,
    ladder: DimensionLadder,
    weights: LossWeights,
    adam: Adam,
    grad: Vec<f32>,
}

impl Trainer {
    pub fn new(model: EncoderModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let ladder = config
            .ladder
            .clone()
            .unwrap_or_else(|| model.ladder.clone());
        if ladder.full_dim() != model.dim {
            return Err(Error::DimensionMismatch {
                expected: model.dim,
                actual: ladder.full_dim(),
            });
        }
        let weights = config
            .loss_weights
            .clone()
            .unwrap_or_else(|| LossWeights::uniform(&ladder));
        weights.covers(&ladder)?;
        let n = model.weights.len();
        Ok(Self {
            adam: Adam::new(config.adam, n),
            grad: vec![0.0; n],
            model,
            config,
            ladder,
            weights,
        })
    }

    pub fn model(&self) -> &EncoderModel {
        &self.model
    }

    fn encode_rows(&self, rows: &[TripletRow]) -> Vec<Encoded> {
        let cap = self.config.max_chars;
        rows.iter()
            .map(|r| Encoded {
                anchor: self.model.features_capped(&r.anchor, cap),
                positive: self.model.features_capped(&r.positive, cap),
                negative: self.model.features_capped(&r.negative, cap),
            })
            .collect()
    }

    fn batch(&self, rows: &[&Encoded]) -> TripletBatch {
        let embed = |pick: fn(&Encoded) -> &FeatureVector| {
            rows.iter().map(|e| self.model.embed_f64(pick(e))).collect()
        };
        TripletBatch {
            anchors: embed(|e| &e.anchor),
            positives: embed(|e| &e.positive),
            negatives: embed(|e| &e.negative),
        }
    }

    /// Matryoshka-wrapped ranking loss of `rows` under the current weights.
    pub fn batch_loss(&self, rows: &[TripletRow]) -> Result<f64> {
        let encoded = self.encode_rows(rows);
        let refs: Vec<&Encoded> = encoded.iter().collect();
        let batch = self.batch(&refs);
        Ok(losses::matryoshka_wrap(&batch, &self.ladder, &self.weights, self.config.scale)?.value)
    }

    /// One optimizer step on `rows`; returns the loss before the update.
    pub fn step(&mut self, rows: &[TripletRow]) -> Result<f64> {
        let encoded = self.encode_rows(rows);
        let refs: Vec<&Encoded> = encoded.iter().collect();
        self.step_encoded(&refs)
    }

    fn step_encoded(&mut self, rows: &[&Encoded]) -> Result<f64> {
        let batch = self.batch(rows);
        let loss = losses::matryoshka_wrap(&batch, &self.ladder, &self.weights, self.config.scale)?;
        if !loss.value.is_finite() {
            return Err(Error::Divergence { batch: 0 });
        }

        // dL/dW[r, j] = Σ_vectors g[r] · count_j
        let f = self.model.feature_space();
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let g = &loss.gradients;
        let vectors = rows.iter().enumerate().flat_map(|(i, e)| {
            [
                (&e.anchor, &g.anchors[i]),
                (&e.positive, &g.positives[i]),
                (&e.negative, &g.negatives[i]),
            ]
        });
        for (features, grad) in vectors {
            for (r, &gr) in grad.iter().enumerate() {
                if gr == 0.0 {
                    continue;
                }
                let row = &mut self.grad[r * f..(r + 1) * f];
                for (j, c) in features.iter() {
                    row[j as usize] += (gr * f64::from(c)) as f32;
                }
            }
        }
        self.adam.update(
            &mut self.model.weights,
            &self.grad,
            self.config.learning_rate,
        );
        if self.model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { batch: 0 });
        }
        Ok(loss.value)
    }

    pub fn into_model(self) -> EncoderModel {
        let mut model = self.model;
        model.ladder = self.ladder;
        model
    }
}

/// Trains `init` on `triplets` with Adam over the Matryoshka-wrapped ranking loss.
///
/// Rows are shuffled every epoch with a generator derived from `config.seed`;
/// the last partial batch is kept. Identical inputs give bit-identical output.
pub fn train(
    init: EncoderModel,
    triplets: &[TripletRow],
    config: &TrainConfig,
) -> Result<(EncoderModel, TrainReport)> {
    if triplets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut trainer = Trainer::new(init, config.clone())?;
    let encoded = trainer.encode_rows(triplets);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut batch_losses = Vec::new();
    let mut epoch_mean_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<&Encoded> = chunk.iter().map(|&i| &encoded[i]).collect();
            let batch_index = batch_losses.len();
            let loss = trainer.step_encoded(&rows).map_err(|e| match e {
                Error::Divergence { .. } => Error::Divergence { batch: batch_index },
                other => other,
            })?;
            batch_losses.push(loss);
            epoch_sum += loss;
            epoch_batches += 1;
        }
        epoch_mean_losses.push(epoch_sum / epoch_batches as f64);
    }

    let model = trainer.into_model();
    let final_accuracy = model
        .ladder
        .iter()
        .map(|m| triplet_accuracy(&model, triplets, m).map(|acc| (m, acc)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        model,
        TrainReport {
            batch_losses,
            epoch_mean_losses,
            final_accuracy,
            duration_ms: None,
        },
    ))
}

/// Fraction of triplets where `cos(anchor, positive) > cos(anchor, negative)`
/// at dimension `m`. Ties count as failures.
pub fn triplet_accuracy<E: Embedder + ?Sized>(
    model: &E,
    triplets: &[TripletRow],
    m: usize,
) -> Result<f64> {
    if !model.ladder().contains(m) {
        return Err(Error::config(alloc::format!(
            "dimension {m} is not in the ladder {}",
            model.ladder()
        )));
    }
    if triplets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for (i, t) in triplets.iter().enumerate() {
        let a = model.embed(&t.anchor, m)?;
        let p = model.embed(&t.positive, m)?;
        let n = model.embed(&t.negative, m)?;
        let ctx = |e: Error| e.with_context(alloc::format!("triplet {i}"));
        let pos = SimilarityMetric::Cosine.raw(&a, &p).map_err(ctx)?;
        let neg = SimilarityMetric::Cosine.raw(&a, &n).map_err(ctx)?;
        if pos > neg {
            correct += 1;
        }
    }
    Ok(correct as f64 / triplets.len() as f64)
}
